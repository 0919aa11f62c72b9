"""Rewriting kernel: derivative rule tables, index contraction and script runs.

Polynomials are kept normalized: ede is replaced by 1 and edv by 1 - 1/z,
so two expressions are equal exactly when their term dictionaries agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional

import numpy as np

from ..errors import ScriptSyntaxError, SymbolicError
from .parser import (Assign, Call, CheckZero, Name, Neg, Num,
                     eval_static, logical_lines, parse_expression, parse_script)
from .poly import ATOMS, DOUBLES, INDEX, SINGLES, VECTORS, Poly, index_degree

# time derivatives D
RULES_T = {
    "u": "u^2*z-u^2",
    "z": "u*z-2*u*z^2+z^3*eda+u*z^3-u*z^3*vdv",
    "v": "z*a",
    "e": "-u*e+u*z*e-u*z*v",
    "a": "z*dot_a",
    "v_i": "z*a_i",
    "e_i": "-u*e_i+u*z*e_i-u*z*v_i",
    "a_i": "z*dot_a_i",
    "ede": "0",
    # D<e,v> = <De,v> + <e,Dv>
    "edv": "-u*edv+u*z*edv-u*z*vdv+z*eda",
    "eda": "-u*eda+u*z*eda-u*z*vda+z*eddot_a",
    "vdv": "2*z*vda",
    "vda": "z*ada+z*vddot_a",
    "ada": "2*z*addot_a",
    "un_i": "0",
}

# spatial derivatives D_i, paired with the same index i
RULES_I = {
    "u": "-u^2*z*e_i",
    "z": "+u*z^2*v_i-u*z^3*e_i+u*z^2*e_i+u*z^3*vdv*e_i-z^3*eda*e_i",
    "e": "+u*un_i-u*z*e_i*e+u*z*e_i*v",
    "v": "-z*e_i*a",
    "a": "-z*e_i*dot_a",
    "e_i": "+u*un_ii-u*z*ee_ii+u*z*ev_ii",
    "v_i": "-z*ea_ii",
    "a_i": "-z*edot_a_ii",
    "ede": "0",
    "edv": "-u*z*edv*e_i+u*v_i+u*z*vdv*e_i-z*eda*e_i",
    "eda": "-u*z*eda*e_i+u*a_i+u*z*vda*e_i-z*eddot_a*e_i",
    "vdv": "-2*z*vda*e_i",
    "vda": "-z*ada*e_i-z*vddot_a*e_i",
    "ada": "-2*z*addot_a*e_i",
    "un_i": "0",
}

_EDE = INDEX["ede"]
_EDV = INDEX["edv"]
_ONE = Poly.const(1)
_EDV_VALUE = _ONE - Poly.atom("z", -1)
T = Poly.atom("u", -1)


@lru_cache(maxsize=None)
def _edv_power(k: int) -> Poly:
    return _EDV_VALUE ** k


def normalize(p: Poly) -> Poly:
    """Substitute ede -> 1 and edv -> 1 - 1/z and collect terms."""
    if not any(e[_EDE] or e[_EDV] for e in p.terms):
        return p
    out: Dict = {}
    for e, c in p.terms.items():
        if not (e[_EDE] or e[_EDV]):
            out[e] = out.get(e, 0) + c
            continue
        k = e[_EDV]
        rest = list(e)
        rest[_EDE] = 0
        rest[_EDV] = 0
        part = Poly({tuple(rest): c}, True) * _edv_power(k)
        for e2, c2 in part.terms.items():
            out[e2] = out.get(e2, 0) + c2
    return Poly({e: c for e, c in out.items() if c}, True)


def _rules(table):
    return {INDEX[name]: normalize(eval_static(parse_expression(text)))
            for name, text in table.items()}


_RT = _rules(RULES_T)
_RI = _rules(RULES_I)


def _product_rule(p: Poly, rules: dict, what: str) -> Poly:
    out: Dict = {}
    for e, c in p.terms.items():
        for k, power in enumerate(e):
            if not power:
                continue
            rule = rules.get(k)
            if rule is None:
                raise SymbolicError(f"no derivative rule for {ATOMS[k]} under {what}")
            if rule.is_zero():
                continue
            lowered = list(e)
            lowered[k] -= 1
            factor = Poly({tuple(lowered): c * power}, True)
            for e2, c2 in (factor * rule).terms.items():
                out[e2] = out.get(e2, 0) + c2
    return Poly({e: c for e, c in out.items() if c}, True)


def differentiate_t(p: Poly) -> Poly:
    """Time derivative D by the product rule over the rule table."""
    return normalize(_product_rule(normalize(p), _RT, "d_t"))


def differentiate_i(p: Poly) -> Poly:
    """Spatial derivative D_i; the input may carry at most one index."""
    p = normalize(p)
    for e in p.terms:
        if index_degree(e) >= 2 or any(e[INDEX[d]] for d in DOUBLES):
            raise SymbolicError("bilinearity exceeded: d_i needs index degree <= 1")
    return normalize(_product_rule(p, _RI, "d_i"))


_ORDER = ("e", "v", "a", "dot_a")
_DOT_NAME = {
    ("e", "e"): "ede", ("e", "v"): "edv", ("e", "a"): "eda", ("e", "dot_a"): "eddot_a",
    ("v", "v"): "vdv", ("v", "a"): "vda", ("v", "dot_a"): "vddot_a",
    ("a", "a"): "ada", ("a", "dot_a"): "addot_a",
}
_DOUBLE_SUM = {"un_ii": None, "ee_ii": "ede", "ev_ii": "edv", "ea_ii": "eda",
               "edot_a_ii": "eddot_a"}
_SINGLE_BASE = {"e_i": "e", "v_i": "v", "a_i": "a", "dot_a_i": "dot_a"}


def _contract_term(e, c):
    deg = index_degree(e)
    if deg == 0:
        return Poly({e: 3 * c}, True)
    if deg != 2:
        raise SymbolicError(f"contraction pattern error: index degree {deg}")
    rest = list(e)
    singles = []
    for name in SINGLES:
        k = INDEX[name]
        singles += [_SINGLE_BASE[name]] * rest[k]
        rest[k] = 0
    doubles = [d for d in DOUBLES if rest[INDEX[d]]]
    un = rest[INDEX["un_i"]]
    for d in doubles:
        rest[INDEX[d]] = 0
    rest[INDEX["un_i"]] = 0
    base = Poly({tuple(rest): c}, True)
    if doubles:
        target = _DOUBLE_SUM[doubles[0]]
        return base * (Poly.const(3) if target is None else Poly.atom(target))
    if un:
        return base * Poly.atom(singles[0])
    pair = tuple(sorted(singles, key=_ORDER.index))
    if pair not in _DOT_NAME:
        raise SymbolicError(f"contraction pattern error: {pair[0]}_i*{pair[1]}_i")
    return base * Poly.atom(_DOT_NAME[pair])


def contract_sum_i(p: Poly) -> Poly:
    """Sum over the index i of every monomial."""
    out = Poly()
    for e, c in p.terms.items():
        out = out + _contract_term(e, c)
    return normalize(out)


_UN_I = Poly.atom("un_i")


def promote(p: Poly) -> Poly:
    """Turn a component expression s_i into the vector expression s."""
    if p.is_vector():
        raise SymbolicError("promote expects a scalar component expression")
    return contract_sum_i(p * _UN_I)


def components(p: Poly) -> Dict[str, Poly]:
    """Split a vector expression into scalar coefficients per vector atom."""
    out: Dict[str, Dict] = {}
    for e, c in p.terms.items():
        for name in VECTORS:
            k = INDEX[name]
            if e[k]:
                lowered = list(e)
                lowered[k] = 0
                out.setdefault(name, {})[tuple(lowered)] = c
                break
        else:
            out.setdefault("", {})[e] = c
    return {k: Poly(v, True) for k, v in out.items()}


def _coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def canonical_string(p: Poly) -> str:
    """Deterministic text: descending exponent order, unit coefficients omitted."""
    if p.is_zero():
        return "0"
    out = []
    for e, c in p.sorted_terms():
        factors = []
        for k, power in enumerate(e):
            if power == 1:
                factors.append(ATOMS[k])
            elif power > 1:
                factors.append(f"{ATOMS[k]}^{power}")
            elif power < 0:
                factors.append(f"{ATOMS[k]}^({power})")
        mag = abs(c)
        if factors and mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([_coeff(mag)] + factors)
        sign = "-" if c < 0 else "+"
        out.append(("" if sign == "+" and not out else sign) + body)
    return "".join(out)


def parse_poly(text: str) -> Poly:
    """Parse an expression over the atom vocabulary into a normalized polynomial."""
    return normalize(eval_static(parse_expression(text)))


# --- numeric evaluation --------------------------------------------------

def atom_values(ff, i: Optional[int] = None) -> dict:
    """Numeric value of every atom for a fundamental-field bundle.

    Index atoms need a component i in {0, 1, 2}; they are omitted otherwise.
    """
    dot = lambda x, y: np.sum(x * y, axis=-1)
    vec = {"e": ff.e, "v": ff.v, "a": ff.a, "dot_a": ff.adot}
    vals = {"u": ff.u, "z": ff.z}
    for (x, y), name in _DOT_NAME.items():
        vals[name] = dot(vec[x], vec[y])
    vals.update(vec)
    if i is not None:
        for name, base in _SINGLE_BASE.items():
            vals[name] = vec[base][..., i]
        vals["un_i"] = np.eye(3)[i]
        vals["un_ii"] = 1.0
        vals["ee_ii"] = ff.e[..., i] ** 2
        vals["ev_ii"] = ff.e[..., i] * ff.v[..., i]
        vals["ea_ii"] = ff.e[..., i] * ff.a[..., i]
        vals["edot_a_ii"] = ff.e[..., i] * ff.adot[..., i]
    return vals


def evaluate(p: Poly, values: dict):
    """Numeric value of p; vector expressions give arrays with a trailing axis 3."""
    total = 0.0
    for e, c in p.terms.items():
        term = float(c)
        vector = None
        for k, power in enumerate(e):
            if not power:
                continue
            name = ATOMS[k]
            if name not in values:
                raise SymbolicError(f"no numeric value for atom {name}")
            if name in VECTORS:
                vector = np.asarray(values[name], float)
            else:
                term = term * np.asarray(values[name], float) ** power
        if vector is not None:
            term = np.asarray(term)[..., None] * vector
        total = total + term
    return total


# --- script execution ----------------------------------------------------

SCRIPT_NAMES = ("wave_phi", "wave_a", "gauge", "feynman_lw")


@dataclass
class Check:
    kind: str          # "restatement" or "check_zero"
    name: str
    line: int
    passed: bool
    residual: str = "0"


@dataclass
class ScriptResult:
    name: str
    namespace: Dict[str, Poly]
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]


def _eval(node, ns) -> Poly:
    if isinstance(node, Num):
        return Poly.const(node.value)
    if isinstance(node, Name):
        return ns[node.id] if node.id in ns else Poly.atom(node.id)
    if isinstance(node, Neg):
        return -_eval(node.operand, ns)
    if isinstance(node, Call):
        arg = _eval(node.arg, ns)
        if node.func == "sum_i":
            return contract_sum_i(arg)
        if node.func == "diff_t":
            return differentiate_t(arg)
        return differentiate_i(arg)
    a, b = _eval(node.left, ns), _eval(node.right, ns)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if not b.is_monomial():
            raise ScriptSyntaxError("unsupported division: divisor is not a single monomial", *node.loc)
        return a / b
    if not b.is_constant() or b.constant_value().denominator != 1:
        raise ScriptSyntaxError("exponent must be a constant integer", *node.loc)
    n = int(b.constant_value())
    if n < 0 and not a.is_monomial():
        raise ScriptSyntaxError("negative power of a non-monomial", *node.loc)
    return a ** n


def run_script(script, namespace: Optional[Dict[str, Poly]] = None, name: str = "") -> ScriptResult:
    """Execute a script; reassigning a name checks the new value equals the old."""
    if isinstance(script, str):
        script = parse_script(script, known=namespace or ())
    ns = dict(namespace or {})
    result = ScriptResult(name, ns)
    for st in script.statements:
        if isinstance(st, Assign):
            try:
                value = normalize(_eval(st.expr, ns))
            except ScriptSyntaxError:
                raise
            except SymbolicError as exc:
                raise SymbolicError(f"{exc} (line {st.loc[0]}, in {st.name})") from None
            if st.name in ns:
                diff = value - ns[st.name]
                result.checks.append(Check("restatement", st.name, st.loc[0], diff.is_zero(),
                                           canonical_string(diff)))
            ns[st.name] = value
        elif isinstance(st, CheckZero):
            value = ns[st.name]
            result.checks.append(Check("check_zero", st.name, st.loc[0], value.is_zero(),
                                       canonical_string(value)))
    return result


def load_script_text(name: str) -> str:
    return (resources.files("lwfield.symbolic") / "scripts" / f"{name}.mth").read_text("utf-8")


def last_listing(text: str, name: str) -> str:
    """Right-hand side text of the last ``name:=`` statement in a script."""
    found = None
    for line, _ in logical_lines(text):
        s = line.strip()
        if s.startswith(name + ":="):
            found = s[len(name) + 2:]
    if found is None:
        raise SymbolicError(f"no assignment to {name}")
    return found


def run_header() -> ScriptResult:
    return run_script(parse_script(load_script_text("header")), name="header")


def run_bundled_scripts() -> Dict[str, ScriptResult]:
    header = run_header()
    out = {"header": header}
    for name in SCRIPT_NAMES:
        script = parse_script(load_script_text(name), known=header.namespace)
        out[name] = run_script(script, header.namespace, name=name)
    return out


# --- identities ----------------------------------------------------------

def _atom(name):
    return Poly.atom(name)


def laplacian(p: Poly) -> Poly:
    return contract_sum_i(differentiate_i(differentiate_i(p)))


def feynman_field_poly() -> Poly:
    """u^2 e + u^-1 D(u^2 e) + D^2 e."""
    u, e = _atom("u"), _atom("e")
    w = u * u * e
    return normalize(w + u ** -1 * differentiate_t(w) + differentiate_t(differentiate_t(e)))


def lw_field_poly() -> Poly:
    """-grad(u z) - D(u z v)."""
    u, z, v = _atom("u"), _atom("z"), _atom("v")
    return normalize(-promote(differentiate_i(u * z)) - differentiate_t(u * z * v))


@dataclass
class VerificationReport:
    identities: Dict[str, Poly]
    expansions: Dict[str, str]
    listings: Dict[str, str]
    scripts: Dict[str, ScriptResult]

    def identity_zero(self, name) -> bool:
        return self.identities[name].is_zero()

    def listing_match(self, name) -> bool:
        return self.expansions[name] == self.listings[name]

    @property
    def passed(self) -> bool:
        return (all(p.is_zero() for p in self.identities.values())
                and all(self.listing_match(k) for k in self.listings)
                and all(s.passed for s in self.scripts.values()))

    def to_json(self) -> dict:
        ids = {}
        for k, p in self.identities.items():
            parts = components(p) if k in ("wave_A", "feynman_minus_lw") else {"": p}
            ids[k] = {"zero": p.is_zero(),
                      "residual": canonical_string(p),
                      "components": {c or "scalar": canonical_string(q) for c, q in parts.items()}}
        return {
            "schema_version": "1.0",
            "passed": self.passed,
            "identities": ids,
            "expansions": {k: {"value": v, "listing": self.listings.get(k),
                               "match": self.listings.get(k) == v}
                           for k, v in self.expansions.items()},
            "scripts": {k: {"passed": s.passed,
                            "checks": [c.__dict__ for c in s.checks]}
                        for k, s in self.scripts.items()},
        }


def run_verifications(with_scripts: bool = True) -> VerificationReport:
    """Reduce the wave, gauge and Feynman-vs-potential identities to polynomials."""
    u, z, v = _atom("u"), _atom("z"), _atom("v")
    phi = u * z
    A = u * z * v
    d_phi = differentiate_t(phi)
    lp_phi = laplacian(phi)
    identities = {
        "wave_phi": lp_phi - differentiate_t(d_phi),
        "wave_A": laplacian(A) - differentiate_t(differentiate_t(A)),
        "gauge": contract_sum_i(differentiate_i(u * z * _atom("v_i"))) + d_phi,
        "feynman_minus_lw": feynman_field_poly() - lw_field_poly(),
    }
    expansions = {"d_phi": canonical_string(d_phi), "lp_phi": canonical_string(lp_phi)}
    listings = {"d_phi": last_listing(load_script_text("gauge"), "d_phi"),
                "lp_phi": last_listing(load_script_text("wave_phi"), "lp_phi")}
    scripts = run_bundled_scripts() if with_scripts else {}
    return VerificationReport(identities, expansions, listings, scripts)
