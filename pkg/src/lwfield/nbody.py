"""Relativistic n-body dynamics with retarded pairwise forces.

Each body carries a history: an analytic prehistory for t <= s and, after s,
nodes (t, r, v, a) joined by quintic Hermite segments. Forces on body j at
time t use the retarded state of every other body read from its history, so a
step of length dt below the regular-step limit sep / (3 (1 + q)) only ever
reads history that is already committed.

The hot path works on plain float tuples; numpy is used at the API boundary.
"""
from __future__ import annotations

import json
import math
import os
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import AdmissibilityError, CollisionError, HistoryError, StepError
from .fields import T_MIN, FundamentalFields, feynman_field
from .trajectory import Trajectory, Uniform, admissibility_check

SCHEMA_VERSION = "1.0"
SEP_MIN = 1e-6
DEFAULT_TOL = 1e-12
_EPS = 2.220446049250313e-16


# --- small vector helpers on 3-tuples ------------------------------------

def _add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _scale(c, a):
    return (c * a[0], c * a[1], c * a[2])


def _axpy(c, a, b):
    return (b[0] + c * a[0], b[1] + c * a[1], b[2] + c * a[2])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _norm(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def _tup(x):
    x = np.asarray(x, float).reshape(3)
    return (float(x[0]), float(x[1]), float(x[2]))


# --- bodies and histories ------------------------------------------------

@dataclass(frozen=True)
class Body:
    m0: float
    q: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not self.m0 > 0:
            raise ValueError("rest mass m0 must be positive")


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quintic(t0, t1, p0, lo0, v0, a0, p1, lo1, v1, a1):
    """Quintic matching (p, v, a) at both ends, in theta in [0, 1].

    Positions come as hi + lo pairs; the coefficients are built from the
    displacement so rounding in |p| does not leak into the acceleration.
    """
    h = t1 - t0
    h2 = h * h
    out = []
    for i in range(3):
        D = (p1[i] - p0[i]) + (lo1[i] - lo0[i])
        V0, A0, V1, A1 = h * v0[i], h2 * a0[i], h * v1[i], h2 * a1[i]
        c3 = 10 * D - 6 * V0 - 1.5 * A0 + 0.5 * A1 - 4 * V1
        c4 = -15 * D + 8 * V0 + 1.5 * A0 - A1 + 7 * V1
        c5 = 6 * D - 3 * V0 - 0.5 * A0 + 0.5 * A1 - 3 * V1
        out.append((p0[i], lo0[i], V0, 0.5 * A0, c3, c4, c5))
    return out


def _eval_segment(coef, th, h, order):
    r, v, a, j = [], [], [], []
    for c0, lo, c1, c2, c3, c4, c5 in coef:
        r.append(c0 + (lo + th * (c1 + th * (c2 + th * (c3 + th * (c4 + th * c5))))))
        if order >= 1:
            v.append((c1 + th * (2 * c2 + th * (3 * c3 + th * (4 * c4 + th * 5 * c5)))) / h)
        if order >= 2:
            a.append((2 * c2 + th * (6 * c3 + th * (12 * c4 + th * 20 * c5))) / (h * h))
        if order >= 3:
            j.append((6 * c3 + th * (24 * c4 + th * 60 * c5)) / (h * h * h))
    return tuple(r), tuple(v), tuple(a), tuple(j)


class HistoryBuffer:
    """Trajectory record of one body: analytic prehistory then Hermite nodes.

    The prehistory may carry a correction tau^2 sum_k c_k (e^(kx) - 1 - kx),
    x = (t - s) / tau, k = 1..m. It leaves position and velocity at s
    unchanged, shifts the derivatives of order 2..m+1 there by the given
    ``deltas``, and keeps the velocity bounded as t -> -inf.
    """

    def __init__(self, prehistory: Trajectory, s: float, a_s=None, deltas=(), tau_c: float = 1.0):
        self.prehistory = prehistory
        self.s = float(s)
        self.ts: List[float] = []
        self.R: List[tuple] = []
        self.Rlo: List[tuple] = []
        self.V: List[tuple] = []
        self.A: List[tuple] = []
        self._coef: List = []
        self._qmax: List[float] = []
        self._set(deltas, tau_c)
        r, v, a = self._pre(self.s, 2)[:3]
        self.append(self.s, r, v, a if a_s is None else _tup(a_s))

    def _set(self, deltas, tau_c):
        self.deltas = tuple(_tup(d) for d in deltas)
        self.tau_c = float(tau_c)
        m = len(self.deltas)
        self._ck = []
        if m and any(any(d) for d in self.deltas):
            k = np.arange(1, m + 1, dtype=float)
            vand = np.array([k ** (n + 2) for n in range(m)])
            rhs = np.array([np.multiply(self.tau_c ** n, d) for n, d in enumerate(self.deltas)])
            c = np.linalg.solve(vand, rhs)
            self._ck = [(float(kk), _tup(ci)) for kk, ci in zip(k, c)]
        q = self.prehistory.speed_bound()
        if q is None:
            q = admissibility_check(self.prehistory, self.s).q
        self.q_pre = float(q) + self.tau_c * sum(kk * _norm(ci) for kk, ci in self._ck)

    # prehistory with the optional correction
    def _pre(self, t, order):
        tr = self.prehistory
        r = _tup(tr.position(t))
        v = _tup(tr.velocity(t)) if order >= 1 else None
        a = _tup(tr.acceleration(t)) if order >= 2 else None
        j = _tup(tr.jerk(t)) if order >= 3 else None
        if self._ck:
            tc = self.tau_c
            x = (t - self.s) / tc
            for kk, ci in self._ck:
                ex = math.exp(kk * x)
                r = _axpy(tc * tc * (ex - 1.0 - kk * x), ci, r)
                if order >= 1:
                    v = _axpy(tc * kk * (ex - 1.0), ci, v)
                if order >= 2:
                    a = _axpy(kk * kk * ex, ci, a)
                if order >= 3:
                    j = _axpy(kk ** 3 * ex / tc, ci, j)
        return r, v, a, j

    def set_correction(self, deltas, tau_c=None):
        """Change the prehistory correction; only allowed before any step."""
        if len(self.ts) > 1:
            raise HistoryError("prehistory is frozen once steps are committed")
        self._set(deltas, self.tau_c if tau_c is None else tau_c)
        r, v, a = self._pre(self.s, 2)[:3]
        self.R[0], self.V[0], self.A[0] = r, v, a

    def prehistory_derivatives(self, m):
        """Derivatives of order 2..m+1 of the uncorrected prehistory at s."""
        tr, s = self.prehistory, self.s
        out = [_tup(tr.acceleration(s)), _tup(tr.jerk(s))]
        if m > 2:
            h = 1e-3 * self.tau_c
            out.append(_scale(0.5 / h, _sub(_tup(tr.jerk(s + h)), _tup(tr.jerk(s - h)))))
        return out[:m]

    @property
    def end(self) -> float:
        return self.ts[-1]

    def __len__(self):
        return len(self.ts)

    def append(self, t, r, v, a, r_lo=(0.0, 0.0, 0.0)):
        """Add a node; r_lo is the low-order part of a compensated position."""
        t = float(t)
        if self.ts and not t > self.ts[-1]:
            raise HistoryError("history nodes must be strictly increasing in time")
        r, v, a = _tup(r), _tup(v), _tup(a)
        speed = _norm(v)
        if not speed < 1.0:
            raise AdmissibilityError("not relativistically admissible: node speed >= 1")
        if self.ts:
            self._coef.append(_quintic(self.ts[-1], t, self.R[-1], self.Rlo[-1], self.V[-1], self.A[-1],
                                       r, r_lo, v, a))
        self.ts.append(t)
        self.R.append(r)
        self.Rlo.append(tuple(map(float, r_lo)))
        self.V.append(v)
        self.A.append(a)
        self._qmax.append(max(self._qmax[-1], speed) if self._qmax else speed)

    def truncate(self, n: int):
        """Keep the first n nodes (n >= 1)."""
        n = max(1, n)
        del self.ts[n:], self.R[n:], self.Rlo[n:], self.V[n:], self.A[n:], self._qmax[n:]
        del self._coef[n - 1:]

    def speed_bound(self, t=None) -> float:
        """Speed bound over the history up to the first node at or after t."""
        if t is None or t >= self.ts[-1]:
            k = len(self.ts) - 1
        else:
            k = bisect_left(self.ts, t)
        return max(self.q_pre, self._qmax[k])

    def evaluate(self, t, order=2):
        """(r, v, a, jerk) at t; entries above ``order`` are None or empty."""
        ts = self.ts
        # at s itself the node wins, except for the jerk which nodes do not carry
        if t < self.s or (t == self.s and order > 2):
            return self._pre(t, order)
        if t > ts[-1]:
            raise HistoryError(f"future query: t = {t!r} beyond last node {ts[-1]!r}")
        k = bisect_right(ts, t) - 1
        if ts[k] == t and order <= 2:
            return self.R[k], self.V[k], self.A[k], None
        if k == len(ts) - 1:
            k -= 1
        t0 = ts[k]
        h = ts[k + 1] - t0
        return _eval_segment(self._coef[k], (t - t0) / h, h, order)

    def position(self, t):
        ts = self.ts
        if t <= self.s:
            return self._pre(t, 0)[0]
        if t > ts[-1]:
            raise HistoryError(f"future query: t = {t!r} beyond last node {ts[-1]!r}")
        k = bisect_right(ts, t) - 1
        if k == len(ts) - 1:
            return self.R[k]
        t0 = ts[k]
        th = (t - t0) / (ts[k + 1] - t0)
        return tuple(c0 + (lo + th * (c1 + th * (c2 + th * (c3 + th * (c4 + th * c5)))))
                     for c0, lo, c1, c2, c3, c4, c5 in self._coef[k])

    def nodes(self):
        return (np.array(self.ts), np.array(self.R), np.array(self.V), np.array(self.A))


def history_eval(hist: HistoryBuffer, t):
    """(r, v, a) of a history at time t as numpy arrays."""
    r, v, a, _ = hist.evaluate(float(t), 2)
    return np.array(r), np.array(v), np.array(a)


class RecordedTrajectory(Trajectory):
    """Finite recorded nodes on [t_first, t_last] with an inertial tail before them."""

    def __init__(self, ts, R, V, A):
        ts = [float(x) for x in ts]
        first = Uniform(v=tuple(V[0]), r0=tuple(np.asarray(R[0]) - ts[0] * np.asarray(V[0])))
        self._buf = HistoryBuffer(first, ts[0], a_s=A[0])
        for k in range(1, len(ts)):
            self._buf.append(ts[k], R[k], V[k], A[k])
        self._tail = first

    def _each(self, t, idx):
        t = np.asarray(t, float)
        out = [self._buf.evaluate(float(x), 3)[idx] if x >= self._buf.s
               else _tup(getattr(self._tail, ("position", "velocity", "acceleration", "jerk")[idx])(x))
               for x in t.reshape(-1)]
        return np.array(out).reshape(t.shape + (3,))

    def position(self, t):
        return self._each(t, 0)

    def velocity(self, t):
        return self._each(t, 1)

    def acceleration(self, t):
        return self._each(t, 2)

    def jerk(self, t):
        return self._each(t, 3)

    def speed_bound(self):
        return self._buf.speed_bound()

    def accel_bound(self):
        return max(_norm(a) for a in self._buf.A)


# --- retarded interaction ------------------------------------------------

def _retarded(hist: HistoryBuffer, rj, t, tol=DEFAULT_TOL, max_iter=500, order=2):
    """Retarded time of the source history seen from (rj, t); returns (s, r, v, a, jerk)."""
    end = hist.ts[-1]
    s = t if t < end else end
    q = hist.speed_bound(t)
    if not q < 1.0:
        raise AdmissibilityError(f"contraction violated: velocity bound q = {q:.6g} >= 1")
    ratio = q / (1.0 - q)
    for _ in range(max_iter):
        p = hist.position(s)
        d0, d1, d2 = rj[0] - p[0], rj[1] - p[1], rj[2] - p[2]
        T = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        s_new = t - T
        if s_new > end:
            raise HistoryError(f"history underrun: retarded time {s_new!r} beyond committed end {end!r}")
        step = abs(s_new - s)
        s = s_new
        # the floor covers rounding in both t and the distance
        if ratio * step <= tol or step <= 4 * _EPS * (abs(t) + T + 1.0):
            break
    else:
        raise HistoryError("retarded-time iteration did not converge")
    r, v, a, jerk = hist.evaluate(s, order)
    return s, r, v, a, jerk


def _pair(hist, rj, t, tol, t_min=T_MIN):
    s, r, v, a, _ = _retarded(hist, rj, t, tol)
    r12 = _sub(rj, r)
    T = _norm(r12)
    if T < t_min:
        raise CollisionError(f"collision: retarded delay {T:.3g} below {t_min:g}")
    u = 1.0 / T
    e = _scale(u, r12)
    z = 1.0 / (1.0 - _dot(e, v))
    eda = _dot(e, a)
    vdv = _dot(v, v)
    uz2 = u * z * z
    uz3 = uz2 * z
    u2z3 = u * uz3
    ce = uz3 * eda + u2z3 * (1.0 - vdv)
    cv = -uz3 * eda - u2z3 * (1.0 - vdv)
    E = (ce * e[0] + cv * v[0] - uz2 * a[0],
         ce * e[1] + cv * v[1] - uz2 * a[1],
         ce * e[2] + cv * v[2] - uz2 * a[2])
    return s, T, e, E


def pairwise_retarded_fields(histories: Sequence[HistoryBuffer], j: int, k: int, t,
                             rj=None, tol: float = DEFAULT_TOL):
    """Fundamental fields of source k at the position of body j, and E_jk.

    rj defaults to the position of j read from its own history at t.
    """
    if j == k:
        raise ValueError("a body does not act on itself")
    t = float(t)
    if rj is None:
        rj = histories[j].position(t)
    rj = _tup(rj)
    s, r, v, a, jerk = _retarded(histories[k], rj, t, tol, order=3)
    r12 = np.subtract(rj, r)
    T = float(np.linalg.norm(r12))
    if T < T_MIN:
        raise CollisionError(f"collision: retarded delay {T:.3g} below {T_MIN:g}")
    e = r12 / T
    v, a = np.array(v), np.array(a)
    ff = FundamentalFields(tau=np.float64(s), T=np.float64(T), u=np.float64(1.0 / T), r12=r12,
                           e=e, v=v, a=a, adot=np.array(jerk),
                           z=np.float64(1.0 / (1.0 - e @ v)))
    return ff, feynman_field(ff).E


def h_operator(body_j: Body, body_k: Body, v_j, e_jk, h):
    """q_j (h + v_j x (e_jk x h)) - m0_k h."""
    v_j, e_jk, h = (np.asarray(x, float) for x in (v_j, e_jk, h))
    return body_j.q * (h + np.cross(v_j, np.cross(e_jk, h))) - body_k.m0 * h


def _force(bodies, histories, j, t, rj, vj, tol, external):
    bj = bodies[j]
    fx = fy = fz = 0.0
    qj = bj.q
    for k, bk in enumerate(bodies):
        if k == j:
            continue
        _, _, e, E = _pair(histories[k], rj, t, tol)
        c = qj - bk.m0
        fx += c * E[0]
        fy += c * E[1]
        fz += c * E[2]
        if qj:
            w = _cross(vj, _cross(e, E))
            fx += qj * w[0]
            fy += qj * w[1]
            fz += qj * w[2]
    F = (fx, fy, fz)
    if external is not None:
        F = _add(F, _tup(external(histories, j, t, rj, vj)))
    return F


def total_force(bodies: Sequence[Body], histories: Sequence[HistoryBuffer], j: int, t,
                rj=None, vj=None, tol: float = DEFAULT_TOL, external: Optional[Callable] = None):
    """Sum over k != j of H_jk(E_jk) plus the external force."""
    t = float(t)
    if rj is None or vj is None:
        r, v, _, _ = histories[j].evaluate(t, 1)
        rj = r if rj is None else rj
        vj = v if vj is None else vj
    return np.array(_force(bodies, histories, j, t, _tup(rj), _tup(vj), tol, external))


def gamma_apply(v, h):
    """Gamma(v) h = h + gamma^2 <v, h> v."""
    v, h = np.asarray(v, float), np.asarray(h, float)
    vv = float(v @ v)
    if not vv < 1.0:
        raise ValueError("|v| must be below 1")
    return h + (v @ h) / (1.0 - vv) * v


def gamma_inverse_apply(v, h):
    """Inverse of Gamma(v): h - <v, h> v."""
    v, h = np.asarray(v, float), np.asarray(h, float)
    if not float(v @ v) < 1.0:
        raise ValueError("|v| must be below 1")
    return h - (v @ h) * v


def _accel_from_force(m0, vj, F):
    vv = _dot(vj, vj)
    if not vv < 1.0:
        raise AdmissibilityError("not relativistically admissible: |v| >= 1")
    inv_m = math.sqrt(1.0 - vv) / m0
    c = _dot(vj, F)
    return ((F[0] - c * vj[0]) * inv_m, (F[1] - c * vj[1]) * inv_m, (F[2] - c * vj[2]) * inv_m)


def acceleration(bodies, histories, j, t, rj=None, vj=None, tol=DEFAULT_TOL, external=None):
    """(1 / (m0 gamma)) Gamma^-1(v_j) F_j."""
    t = float(t)
    if rj is None or vj is None:
        r, v, _, _ = histories[j].evaluate(t, 1)
        rj = r if rj is None else rj
        vj = v if vj is None else vj
    rj, vj = _tup(rj), _tup(vj)
    F = _force(bodies, histories, j, t, rj, vj, tol, external)
    return np.array(_accel_from_force(bodies[j].m0, vj, F))


def _accels(bodies, histories, t, R, V, tol, external):
    return [_accel_from_force(b.m0, V[j], _force(bodies, histories, j, t, R[j], V[j], tol, external))
            for j, b in enumerate(bodies)]


# --- state, separation ---------------------------------------------------

@dataclass
class SystemState:
    t: float
    r: np.ndarray
    v: np.ndarray

    def momenta(self, bodies) -> np.ndarray:
        m0 = np.array([b.m0 for b in bodies])
        g = 1.0 / np.sqrt(1.0 - np.sum(self.v**2, axis=1))
        return (m0 * g)[:, None] * self.v


def current_state(histories) -> SystemState:
    t = histories[0].end
    return SystemState(t, np.array([h.R[-1] for h in histories]),
                       np.array([h.V[-1] for h in histories]))


@dataclass(frozen=True)
class SeparationReport:
    t: float
    sep: float
    mtd: float
    q: float
    sep_lower: float
    limit: float

    def to_json(self):
        return dict(self.__dict__)


def separation_metrics(histories: Sequence[HistoryBuffer], tol: float = DEFAULT_TOL) -> SeparationReport:
    """sep, minimal time delay, speed bound and the regular-step limit at the history end."""
    n = len(histories)
    if n < 2:
        raise ValueError("separation needs at least two bodies")
    t = histories[0].end
    R = [h.R[-1] for h in histories]
    sep = min(_norm(_sub(R[j], R[k])) for j in range(n) for k in range(j + 1, n))
    mtd = math.inf
    for j in range(n):
        for k in range(n):
            if j != k:
                s, _, _, _, _ = _retarded(histories[k], R[j], t, tol, order=0)
                mtd = min(mtd, t - s)
    q = max(h.speed_bound() for h in histories)
    return SeparationReport(t, sep, mtd, q, sep / 3.0, sep / (3.0 * (1.0 + q)))


# --- integrators ---------------------------------------------------------

def step_method_of_steps(bodies, histories, dt: float, tol: float = DEFAULT_TOL,
                         external=None, limit: Optional[float] = None,
                         sep_min: float = SEP_MIN) -> SystemState:
    """One classical RK4 step of all bodies; appends a node to every history.

    The node acceleration at the start of the step is reused as the first
    stage. dt above the regular-step limit is rejected.
    """
    n = len(bodies)
    t = histories[0].end
    if any(h.end != t for h in histories):
        raise HistoryError("histories are not synchronized")
    if n > 1:
        if limit is None:
            rep = separation_metrics(histories, tol)
            if rep.sep < sep_min:
                raise CollisionError(f"collision stop: sep {rep.sep:.3g} < {sep_min:g}")
            limit = rep.limit
        if dt > limit:
            raise StepError(f"step too large: dt = {dt:.6g} exceeds regular-step limit {limit:.6g}")
    if not dt > 0:
        raise StepError("dt must be positive")
    Rhi = [h.R[-1] for h in histories]
    Rlo = [h.Rlo[-1] for h in histories]
    R = [_add(Rhi[j], Rlo[j]) for j in range(n)]
    V = [h.V[-1] for h in histories]
    A1 = [h.A[-1] for h in histories]
    half = 0.5 * dt
    R2 = [_axpy(half, V[j], R[j]) for j in range(n)]
    V2 = [_axpy(half, A1[j], V[j]) for j in range(n)]
    A2 = _accels(bodies, histories, t + half, R2, V2, tol, external)
    R3 = [_axpy(half, V2[j], R[j]) for j in range(n)]
    V3 = [_axpy(half, A2[j], V[j]) for j in range(n)]
    A3 = _accels(bodies, histories, t + half, R3, V3, tol, external)
    R4 = [_axpy(dt, V3[j], R[j]) for j in range(n)]
    V4 = [_axpy(dt, A3[j], V[j]) for j in range(n)]
    A4 = _accels(bodies, histories, t + dt, R4, V4, tol, external)
    c = dt / 6.0
    Rn, Ln, Vn = [], [], []
    for j in range(n):
        # compensated position update: hi + lo carries the increment exactly
        parts = [_two_sum(Rhi[j][i], Rlo[j][i] + c * (V[j][i] + 2 * V2[j][i] + 2 * V3[j][i] + V4[j][i]))
                 for i in range(3)]
        Rn.append(tuple(p[0] for p in parts))
        Ln.append(tuple(p[1] for p in parts))
        Vn.append(tuple(V[j][i] + c * (A1[j][i] + 2 * A2[j][i] + 2 * A3[j][i] + A4[j][i]) for i in range(3)))
    t_new = t + dt
    An = _accels(bodies, histories, t_new, Rn, Vn, tol, external)
    for j in range(n):
        histories[j].append(t_new, Rn[j], Vn[j], An[j], Ln[j])
    return SystemState(t_new, np.array(Rn), np.array(Vn))


@dataclass
class PicardResult:
    t: np.ndarray          # Chebyshev-Lobatto times on [s, s + delta]
    r: np.ndarray          # (n_bodies, M, 3)
    v: np.ndarray
    a: np.ndarray
    iterations: int
    distances: List[float]
    lam_hat: float
    bound: float

    def final(self):
        return self.r[:, -1], self.v[:, -1]


def _cheb_integral(y, delta):
    """Integral from the left end of samples y at Chebyshev-Lobatto nodes, per column."""
    m = y.shape[0] - 1
    x = -np.cos(np.pi * np.arange(m + 1) / m)
    coef = C.chebfit(x, y, m)
    integ = C.chebint(coef, lbnd=-1.0) * (0.5 * delta)
    return C.chebval(x, integ).T


def picard_solve(bodies, histories, delta: float, tol: float = 1e-13, nodes: int = 16,
                 max_iter: int = 100, external=None, ftol: float = DEFAULT_TOL) -> PicardResult:
    """Fixed point y = Omega(y) on [s, s + delta] for all bodies at once.

    Omega integrates (v, Lambda(y)) from the committed state at s. The
    iteration stops once successive iterates differ by at most tol in the
    sup norm; growth of that distance three times in a row is reported as a
    step that is too large for the contraction.
    """
    n = len(bodies)
    s = histories[0].end
    if n > 1:
        rep = separation_metrics(histories, ftol)
        if delta > rep.limit:
            raise StepError(f"step too large: delta = {delta:.6g} exceeds regular-step limit {rep.limit:.6g}")
    x = -np.cos(np.pi * np.arange(nodes) / (nodes - 1))
    times = s + 0.5 * delta * (x + 1.0)
    r0 = np.array([h.R[-1] for h in histories])
    v0 = np.array([h.V[-1] for h in histories])
    r = np.repeat(r0[:, None, :], nodes, axis=1) + v0[:, None, :] * (times - s)[None, :, None]
    v = np.repeat(v0[:, None, :], nodes, axis=1)

    def lam(r, v):
        out = np.empty_like(v)
        for m, tm in enumerate(times):
            R = [tuple(r[j, m]) for j in range(n)]
            V = [tuple(v[j, m]) for j in range(n)]
            out[:, m] = _accels(bodies, histories, float(tm), R, V, ftol, external)
        return out

    # Lipschitz estimate of Lambda from two perturbed evaluations
    a = lam(r, v)
    eps = 1e-6
    lam_hat = 0.0
    for dr, dv in ((eps, 0.0), (0.0, eps)):
        a2 = lam(r + dr, v + dv)
        lam_hat = max(lam_hat, float(np.max(np.abs(a2 - a))) / eps)
    bound = max(delta, delta * lam_hat)

    distances: List[float] = []
    growth = 0
    for it in range(1, max_iter + 1):
        r_new = r0[:, None, :] + np.stack([_cheb_integral(v[j], delta) for j in range(n)])
        v_new = v0[:, None, :] + np.stack([_cheb_integral(a[j], delta) for j in range(n)])
        dist = float(max(np.max(np.abs(r_new - r)), np.max(np.abs(v_new - v))))
        if distances and dist > distances[-1]:
            growth += 1
            if growth >= 3:
                raise StepError("step too large: Picard iterates are not contracting")
        else:
            growth = 0
        distances.append(dist)
        r, v = r_new, v_new
        if np.any(np.sum(v**2, axis=-1) >= 1.0):
            raise AdmissibilityError("not relativistically admissible: Picard iterate reached |v| >= 1")
        a = lam(r, v)
        if dist <= tol:
            break
    else:
        raise StepError("Picard iteration did not converge")
    return PicardResult(times, r, v, a, it, distances, lam_hat, bound)


# --- set-up helpers ------------------------------------------------------

def inertial_prehistory(r, v, s: float = 0.0) -> Uniform:
    """Straight line through r at time s with constant velocity v."""
    r, v = np.asarray(r, float), np.asarray(v, float)
    return Uniform(v=tuple(v), r0=tuple(r - s * v))


def make_histories(bodies, prehistories: Sequence[Trajectory], s: float = 0.0,
                   matched: int = 0, tau_c: Optional[float] = None,
                   tol: float = DEFAULT_TOL, external=None, max_iter: int = 50):
    """Histories starting at s whose first node carries the dynamic acceleration.

    With matched = m > 0 (True means 3) each prehistory also gets the
    correction that makes its derivatives of order 2..m+1 at s equal to the
    dynamic ones. A jump in some derivative of the acceleration at s is
    carried forward to every later retarded crossing of s, so a smooth
    junction is what keeps step-size convergence clean.
    """
    m = 3 if matched is True else int(matched)
    if not 0 <= m <= 3:
        raise ValueError("matched order must be between 0 and 3")
    hs = [HistoryBuffer(p, s) for p in prehistories]
    n = len(hs)
    if n > 1 and tau_c is None:
        R = [h.R[0] for h in hs]
        tau_c = min(_norm(_sub(R[j], R[k])) for j in range(n) for k in range(j + 1, n))
    tau_c = 1.0 if tau_c is None else tau_c
    R = [h.R[0] for h in hs]
    V = [h.V[0] for h in hs]
    if m:
        eps = 1e-2 * tau_c
        base = [h.prehistory_derivatives(m) for h in hs]
        dyn = [base[j][:] + [(0.0, 0.0, 0.0)] * (3 - m) for j in range(n)]
        for _ in range(max_iter):
            # acceleration along the Taylor-extrapolated flow at s + i eps
            samples = {}
            for i in (-2, -1, 0, 1, 2):
                d = i * eps
                Ri, Vi = [], []
                for j in range(n):
                    a, jk, sn = dyn[j][0], dyn[j][1], dyn[j][2]
                    Ri.append(_axpy(d**4 / 24, sn, _axpy(d**3 / 6, jk, _axpy(0.5 * d * d, a, _axpy(d, V[j], R[j])))))
                    Vi.append(_axpy(d**3 / 6, sn, _axpy(0.5 * d * d, jk, _axpy(d, a, V[j]))))
                samples[i] = _accels(bodies, hs, s + d, Ri, Vi, tol, external)
            change = 0.0
            new_dyn = []
            for j in range(n):
                f = {i: samples[i][j] for i in samples}
                a = f[0]
                jk = tuple((-f[2][c] + 8 * f[1][c] - 8 * f[-1][c] + f[-2][c]) / (12 * eps) for c in range(3))
                sn = tuple((-f[2][c] + 16 * f[1][c] - 30 * f[0][c] + 16 * f[-1][c] - f[-2][c]) / (12 * eps * eps)
                           for c in range(3))
                new_dyn.append([a, jk, sn])
            scale = max(1e-300, max(_norm(x[0]) for x in new_dyn))
            for j, h in enumerate(hs):
                for o in range(m):
                    change = max(change, tau_c ** o * _norm(_sub(new_dyn[j][o], dyn[j][o])) / scale)
                dyn[j] = new_dyn[j]
                h.set_correction([_sub(dyn[j][o], base[j][o]) for o in range(m)], tau_c)
            if change <= 1e-12:
                break
    A = _accels(bodies, hs, s, R, V, tol, external)
    for j, h in enumerate(hs):
        h.A[0] = A[j]
    return hs


# --- driver --------------------------------------------------------------

@dataclass
class SimulationConfig:
    bodies: List[Body]
    prehistories: List[Trajectory]
    dt: float
    horizon: float
    t0: float = 0.0
    sep_min: float = SEP_MIN
    tol: float = DEFAULT_TOL
    matched_prehistory: bool = False
    max_steps: int = 1_000_000
    external: Optional[Callable] = None


@dataclass
class RunRecord:
    bodies: List[Body]
    histories: List[HistoryBuffer]
    reports: List[SeparationReport] = field(default_factory=list)
    termination: str = ""
    message: str = ""

    @property
    def steps(self) -> int:
        return len(self.histories[0]) - 1

    def jsonl_lines(self):
        hs = self.histories
        rep = {r.t: r for r in self.reports}
        for k, t in enumerate(hs[0].ts):
            row = {"schema_version": SCHEMA_VERSION, "step": k, "t": t,
                   "bodies": [{"label": b.label, "r": list(h.R[k]), "v": list(h.V[k]),
                               "a": list(h.A[k])} for b, h in zip(self.bodies, hs)]}
            if t in rep:
                row["separation"] = rep[t].to_json()
            yield json.dumps(row)
        yield json.dumps({"schema_version": SCHEMA_VERSION, "termination": self.termination,
                          "message": self.message, "steps": self.steps})

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for line in self.jsonl_lines():
                fh.write(line + "\n")

    def write_csv(self, directory, prefix="body"):
        """One CSV per body: t, x, y, z, vx, vy, vz, ax, ay, az."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for j, (b, h) in enumerate(zip(self.bodies, self.histories)):
            name = b.label or str(j)
            path = os.path.join(directory, f"{prefix}_{name}.csv")
            with open(path, "w") as fh:
                fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
                fh.write(f"# body: {name} m0={b.m0!r} q={b.q!r}\n")
                fh.write("t,x,y,z,vx,vy,vz,ax,ay,az\n")
                for k, t in enumerate(h.ts):
                    vals = (t,) + h.R[k] + h.V[k] + h.A[k]
                    fh.write(",".join(repr(float(x)) for x in vals) + "\n")
            paths.append(path)
        return paths


def simulate(cfg: SimulationConfig, histories=None, on_step: Optional[Callable] = None) -> RunRecord:
    """Step until the horizon, a collision stop, or loss of admissibility.

    Each step uses dt = min(cfg.dt, regular-step limit, time left).
    """
    bodies = cfg.bodies
    if histories is None:
        histories = make_histories(bodies, cfg.prehistories, cfg.t0, matched=cfg.matched_prehistory,
                                   tol=cfg.tol, external=cfg.external)
    rec = RunRecord(bodies, histories)
    n = len(bodies)
    for _ in range(cfg.max_steps):
        t = histories[0].end
        limit = math.inf
        try:
            if n > 1:
                rep = separation_metrics(histories, cfg.tol)
                rec.reports.append(rep)
                if rep.sep < cfg.sep_min:
                    rec.termination = "collision stop"
                    rec.message = f"sep {rep.sep:.6g} < {cfg.sep_min:g} at t = {t:.9g}"
                    return rec
                limit = rep.limit
            left = cfg.horizon - t
            if left <= 4 * _EPS * max(1.0, abs(cfg.horizon)):
                rec.termination = "horizon"
                return rec
            dt = min(cfg.dt, limit)
            if dt >= left * (1.0 - 1e-9):
                dt = left
            step_method_of_steps(bodies, histories, dt, cfg.tol, cfg.external, limit=limit)
        except CollisionError as exc:
            rec.termination = "collision stop"
            rec.message = str(exc)
            return rec
        except AdmissibilityError as exc:
            rec.termination = "not admissible"
            rec.message = str(exc)
            return rec
        if on_step is not None:
            on_step(histories)
    rec.termination = "max steps"
    return rec
