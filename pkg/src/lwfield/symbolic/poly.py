"""Exact Laurent polynomials over the field-atom vocabulary.

A monomial is an exponent tuple over the fixed atom order ATOMS. Only u and z
may carry negative exponents. At most one vector atom appears per monomial,
and the index degree (singletons + 2 * double-index atoms + un_i) is at most 2.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Tuple

from ..errors import SymbolicError

SCALARS = ("u", "z")
DOTS = ("ada", "addot_a", "eda", "eddot_a", "ede", "edv", "vda", "vddot_a", "vdv")
SINGLES = ("a_i", "dot_a_i", "e_i", "v_i")
DOUBLES = ("ea_ii", "edot_a_ii", "ee_ii", "ev_ii", "un_ii")
VECTORS = ("a", "dot_a", "e", "un_i", "v")
ATOMS = SCALARS + DOTS + SINGLES + DOUBLES + VECTORS
INDEX = {name: k for k, name in enumerate(ATOMS)}
N = len(ATOMS)

LAURENT = frozenset(INDEX[a] for a in SCALARS)
_VEC = tuple(INDEX[a] for a in VECTORS)
_SINGLE = tuple(INDEX[a] for a in SINGLES)
_DOUBLE = tuple(INDEX[a] for a in DOUBLES)
_UN_I = INDEX["un_i"]
_ZERO = (0,) * N

Exps = Tuple[int, ...]


def index_degree(exps: Exps) -> int:
    return (sum(exps[k] for k in _SINGLE) + 2 * sum(exps[k] for k in _DOUBLE)
            + exps[_UN_I])


def vector_degree(exps: Exps) -> int:
    return sum(exps[k] for k in _VEC)


def vector_atom(exps: Exps):
    for k in _VEC:
        if exps[k]:
            return ATOMS[k]
    return None


def _check(exps: Exps):
    for k, p in enumerate(exps):
        if p < 0 and k not in LAURENT:
            raise SymbolicError(f"negative power of {ATOMS[k]} is not allowed")
    if vector_degree(exps) > 1:
        raise SymbolicError("product of two vector quantities")
    if index_degree(exps) > 2:
        raise SymbolicError("bilinearity exceeded: index degree above 2")


class Poly:
    """Immutable sum of monomials with Fraction coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Dict[Exps, Fraction] = None, _trusted=False):
        if terms is None:
            terms = {}
        elif not _trusted:
            terms = {e: Fraction(c) for e, c in terms.items() if c != 0}
            for e in terms:
                _check(e)
        self.terms = terms
        self._hash = None
        kinds = {vector_degree(e) for e in terms}
        if len(kinds) > 1:
            raise SymbolicError("sum mixes scalar and vector terms")

    # construction

    @classmethod
    def const(cls, c) -> "Poly":
        c = Fraction(c)
        return cls({_ZERO: c}, True) if c else cls()

    @classmethod
    def atom(cls, name: str, power: int = 1) -> "Poly":
        if name not in INDEX:
            raise SymbolicError(f"unknown atom {name!r}")
        e = [0] * N
        e[INDEX[name]] = power
        e = tuple(e)
        _check(e)
        return cls({e: Fraction(1)}, True)

    # predicates

    def is_zero(self) -> bool:
        return not self.terms

    def is_vector(self) -> bool:
        return any(vector_degree(e) for e in self.terms)

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and _ZERO in self.terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise SymbolicError("expression is not a constant")
        return self.terms.get(_ZERO, Fraction(0))

    def index_degrees(self) -> set:
        return {index_degree(e) for e in self.terms}

    def atoms(self) -> set:
        return {ATOMS[k] for e in self.terms for k, p in enumerate(e) if p}

    # arithmetic

    def __add__(self, other):
        other = _lift(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Poly(out, True)

    __radd__ = __add__

    def __neg__(self):
        return Poly({e: -c for e, c in self.terms.items()}, True)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        out: Dict[Exps, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                _check(e)
                s = out.get(e, 0) + c1 * c2
                if s:
                    out[e] = s
                else:
                    out.pop(e, None)
        return Poly(out, True)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if int(n) != n:
            raise SymbolicError("exponent must be an integer")
        n = int(n)
        if n < 0:
            return self.inverse() ** (-n)
        out = Poly.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def inverse(self) -> "Poly":
        """Reciprocal of a monomial; anything else is not a polynomial."""
        if not self.is_monomial():
            raise SymbolicError("unsupported division: divisor is not a single monomial")
        (e, c), = self.terms.items()
        return Poly({tuple(-p for p in e): 1 / c})

    def __truediv__(self, other):
        return self * _lift(other).inverse()

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def sorted_terms(self):
        """Terms in canonical order: descending exponent tuples."""
        return sorted(self.terms.items(), key=lambda t: t[0], reverse=True)

    def __repr__(self):
        from .engine import canonical_string
        return f"Poly({canonical_string(self)!r})"


def _lift(x) -> Poly:
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction)):
        return Poly.const(x)
    raise TypeError(f"cannot use {type(x).__name__} as a polynomial")


def monomial(coeff, powers: Dict[str, int]) -> Poly:
    e = [0] * N
    for name, p in powers.items():
        e[INDEX[name]] += p
    return Poly({tuple(e): Fraction(coeff)})


def total(polys: Iterable[Poly]) -> Poly:
    out = Poly()
    for p in polys:
        out = out + p
    return out
