"""Parser and renderer for the DERIVE-style script dialect.

Grammar, one statement per logical line (a trailing ``~`` joins the next
physical line verbatim, so identifiers may be split across lines)::

    statement  := comment | name ':=' expr | 'check_zero' '(' name ')'
    comment    := '"' text ['"']
    expr       := term (('+' | '-') term)*
    term       := unary (('*' | '/') unary)*
    unary      := ('+' | '-') unary | power
    power      := primary ['^' unary]
    primary    := integer | name | func '(' expr ')' | '(' expr ')'

A comment whose closing quote is missing runs to the end of its line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

from ..errors import ScriptSyntaxError, SymbolicError
from .poly import ATOMS, Poly

FUNCTIONS = ("sum_i", "diff_t", "diff_i")
IDENT = re.compile(r"[a-z][a-z0-9_]*")


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: int
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Name(Node):
    id: str
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Comment:
    text: str
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Node
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class CheckZero:
    name: str
    loc: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Script:
    statements: Tuple
    source: str = field(default="", compare=False)

    def assigned_names(self) -> List[str]:
        seen = []
        for st in self.statements:
            if isinstance(st, Assign) and st.name not in seen:
                seen.append(st.name)
        return seen


# --- lines and tokens ----------------------------------------------------

def logical_lines(text: str):
    """Yield (string, positions) with positions[k] = (line, col) of char k."""
    buf, pos = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        cont = line.endswith("~")
        if cont:
            line = line[:-1]
        buf.append(line)
        pos.extend((lineno, c + 1) for c in range(len(line)))
        if not cont:
            yield "".join(buf), pos
            buf, pos = [], []
    if buf:
        yield "".join(buf), pos


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>:=|[-+*/^()]))")


def _tokenize(s: str, pos):
    toks = []
    k = 0
    while k < len(s):
        m = _TOKEN.match(s, k)
        if not m or m.end() == k:
            if s[k:].strip() == "":
                break
            j = k + len(s[k:]) - len(s[k:].lstrip())
            raise ScriptSyntaxError(f"unexpected character {s[j]!r}", *pos[j])
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        if kind == "name" and not IDENT.fullmatch(text):
            raise ScriptSyntaxError(f"invalid identifier {text!r}", *pos[start])
        toks.append((kind, text, pos[start]))
        k = m.end()
    end = pos[-1] if pos else (0, 0)
    toks.append(("end", "", (end[0], end[1] + 1)))
    return toks


class _Parser:
    def __init__(self, toks, known, static):
        self.toks = toks
        self.k = 0
        self.known = known
        self.static = static

    def peek(self):
        return self.toks[self.k]

    def take(self, text=None, kind=None):
        tok = self.toks[self.k]
        if (text is not None and tok[1] != text) or (kind is not None and tok[0] != kind):
            want = repr(text) if text else kind
            got = repr(tok[1]) if tok[1] else "end of statement"
            raise ScriptSyntaxError(f"expected {want}, found {got}", *tok[2])
        self.k += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, loc = self.take()
            node = BinOp(op, node, self.term(), loc)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, loc = self.take()
            right = self.unary()
            if op == "/":
                self._check_divisor(right, loc)
            node = BinOp(op, node, right, loc)
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            _, op, loc = self.take()
            inner = self.unary()
            return Neg(inner, loc) if op == "-" else inner
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^":
            _, _, loc = self.take()
            return BinOp("^", base, self.unary(), loc)
        return base

    def primary(self):
        kind, text, loc = self.peek()
        if kind == "num":
            self.take()
            return Num(int(text), loc)
        if kind == "name":
            self.take()
            if text in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(text, arg, loc)
            if text not in self.known:
                raise ScriptSyntaxError(f"unknown identifier {text!r}", *loc)
            return Name(text, loc)
        if text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise ScriptSyntaxError(f"unexpected {text!r}" if text else "unexpected end of statement", *loc)

    def _check_divisor(self, node, loc):
        # divisors built only from numbers and vocabulary atoms are checked now
        if not _names(node) <= self.static:
            return
        try:
            value = eval_static(node)
        except SymbolicError as exc:
            raise ScriptSyntaxError(str(exc), *loc) from None
        if not value.is_monomial():
            raise ScriptSyntaxError("unsupported division: divisor is not a single monomial", *loc)


def _names(node) -> set:
    if isinstance(node, Name):
        return {node.id}
    if isinstance(node, Neg):
        return _names(node.operand)
    if isinstance(node, BinOp):
        return _names(node.left) | _names(node.right)
    if isinstance(node, Call):
        return {node.func} | _names(node.arg)
    return set()


def eval_static(node) -> Poly:
    """Evaluate an expression made of integers and atoms only."""
    if isinstance(node, Num):
        return Poly.const(node.value)
    if isinstance(node, Name):
        return Poly.atom(node.id)
    if isinstance(node, Neg):
        return -eval_static(node.operand)
    if isinstance(node, BinOp):
        a, b = eval_static(node.left), eval_static(node.right)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return a ** int(b.constant_value())
    raise SymbolicError("function call in a static expression")


def parse_expression(text: str, known: Iterable[str] = ()) -> Node:
    user = set(known)
    pos = [(1, c + 1) for c in range(len(text))]
    p = _Parser(_tokenize(text, pos), user | set(ATOMS), set(ATOMS) - user)
    node = p.expr()
    p.take(kind="end")
    return node


def parse_script(text: str, known: Iterable[str] = ()) -> Script:
    """Parse a script; names in ``known`` count as already assigned."""
    assigned = set(known)
    statements = []
    for s, pos in logical_lines(text):
        stripped = s.strip()
        if not stripped:
            continue
        lead = len(s) - len(s.lstrip())
        if stripped.startswith('"'):
            body = stripped[1:]
            close = body.find('"')
            if close >= 0:
                rest = body[close + 1:].strip()
                if rest:
                    j = s.index(rest[0], lead + close + 2)
                    raise ScriptSyntaxError("text after comment", *pos[j])
                body = body[:close]
            statements.append(Comment(body, pos[lead]))
            continue
        toks = _tokenize(s, pos)
        static = set(ATOMS) - assigned
        p = _Parser(toks, assigned | set(ATOMS), static)
        kind, text0, loc = toks[0]
        if kind == "name" and text0 == "check_zero" and toks[1][1] == "(":
            p.take()
            p.take("(")
            _, name, nloc = p.take(kind="name")
            if name not in assigned:
                raise ScriptSyntaxError(f"check_zero of unassigned name {name!r}", *nloc)
            p.take(")")
            p.take(kind="end")
            statements.append(CheckZero(name, loc))
            continue
        _, name, loc = p.take(kind="name")
        if name in FUNCTIONS or name == "check_zero":
            raise ScriptSyntaxError(f"cannot assign to {name!r}", *loc)
        p.take(":=")
        expr = p.expr()
        p.take(kind="end")
        statements.append(Assign(name, expr, loc))
        assigned.add(name)
    return Script(tuple(statements), text)


# --- rendering -----------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def render_expr(node: Node, min_prec: int = 0) -> str:
    if isinstance(node, Num):
        s, prec = str(node.value), 5
    elif isinstance(node, Name):
        s, prec = node.id, 5
    elif isinstance(node, Call):
        s, prec = f"{node.func}({render_expr(node.arg)})", 5
    elif isinstance(node, Neg):
        s, prec = "-" + render_expr(node.operand, 3), 3
    elif isinstance(node, BinOp):
        prec = _PREC[node.op]
        if node.op == "^":
            s = render_expr(node.left, 5) + "^" + render_expr(node.right, 3)
        else:
            s = render_expr(node.left, prec) + node.op + render_expr(node.right, prec + 1)
    else:
        raise TypeError(node)
    return f"({s})" if prec < min_prec else s


def _wrap(line: str, width: Optional[int]) -> str:
    if not width or len(line) <= width:
        return line
    parts = [line[k:k + width - 1] for k in range(0, len(line), width - 1)]
    return "~\n".join(parts)


def render_script(script: Script, width: Optional[int] = None) -> str:
    """Render back to text; ``width`` wraps long lines with ``~``."""
    out = []
    for st in script.statements:
        if isinstance(st, Comment):
            line = f'"{st.text}"'
        elif isinstance(st, Assign):
            line = f"{st.name}:={render_expr(st.expr)}"
        else:
            line = f"check_zero({st.name})"
        out.append(_wrap(line, width))
    return "\n".join(out) + "\n"
