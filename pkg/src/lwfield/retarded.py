"""Retarded time: the emission time tau solving tau = t - |r1 - r2(tau)|.

The map f(s) = t - |r1 - r2(s)| is a contraction with constant q (the speed
bound of the source), so plain fixed-point iteration converges from any seed.
An independent bisection solver is kept alongside as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractionError, SmoothnessError
from .trajectory import Trajectory, admissibility_check

DEFAULT_TOL = 1e-12
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RetardedSolution:
    tau: np.ndarray
    T: np.ndarray
    iterations: np.ndarray
    final_bound: np.ndarray
    iterates: Optional[list] = None


def speed_bound(traj: Trajectory, t=0.0) -> float:
    """Velocity bound used as the contraction constant up to time t."""
    q = traj.speed_bound()
    if q is None:
        q = admissibility_check(traj, float(np.max(t))).q
    return float(q)


def _prepare(r1, t):
    r1 = np.asarray(r1, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(r1.shape[:-1], t.shape)
    return np.broadcast_to(r1, shape + (3,)), np.broadcast_to(t, shape)


def _dist(r1, r2):
    return np.sqrt(np.sum((r1 - r2) ** 2, axis=-1))


def _squeeze(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def retarded_time(traj: Trajectory, r1, t, tol: float = DEFAULT_TOL, q: Optional[float] = None,
                  variant: str = "uniqueness", max_iter: int = 100_000,
                  trace: bool = False) -> RetardedSolution:
    """Banach iteration for the retarded time, vectorized over points.

    The default variant iterates s_n = t - |r1 - r2(s_{n-1})| from s_0 = t and
    stops once the a-priori bound q^n/(1-q) |s_1 - s_0| or the a-posteriori
    bound q/(1-q) |s_n - s_{n-1}| is below tol, or once the steps stall at
    rounding level. variant="explicit" runs s_n = t - |r1 - r2(t - s_{n-1})|
    from s_0 = 0 instead; its fixed point is not the retarded time and it is
    provided only for auditing that alternative form.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if variant not in ("uniqueness", "explicit"):
        raise ValueError(f"unknown variant {variant!r}")
    r1, t = _prepare(r1, t)
    if q is None:
        q = speed_bound(traj, t)
    if not q < 1.0:
        raise ContractionError(f"contraction violated: velocity bound q = {q:.6g} >= 1")

    if variant == "uniqueness":
        s = t.copy()
        arg = lambda s, idx: s
    else:
        s = np.zeros_like(t)
        arg = lambda s, idx: t[idx] - s
    s = np.array(s, dtype=float)
    first_step = None
    n_iter = np.zeros(t.shape, dtype=int)
    bound = np.full(t.shape, np.inf)
    prev_step = np.full(t.shape, np.inf)
    polish = np.zeros(t.shape, dtype=bool)
    slack = np.zeros(t.shape)
    active = np.ones(t.shape, dtype=bool)
    iterates = [s.copy()] if trace else None
    n = 0
    while active.any():
        n += 1
        if n > max_iter:
            raise RuntimeError("retarded-time iteration did not converge")
        idx = active.copy()
        s_old = s[idx]
        s_new = t[idx] - _dist(r1[idx], traj.position(arg(s_old, idx)))
        s[idx] = s_new
        if first_step is None:
            first_step = np.abs(s - (t if variant == "uniqueness" else 0.0))
        n_iter[idx] = n
        bound[idx] = q**n / (1.0 - q) * first_step[idx]
        step = np.abs(s_new - s_old)
        # a-posteriori Banach estimate of the remaining error
        post = q / (1.0 - q) * step
        # once steps are at rounding level and stop shrinking, more sweeps only add noise
        floor = 4 * _EPS * np.maximum(1.0, np.maximum(np.abs(s_new), np.abs(t[idx])))
        stalled = (step <= floor) & ((step >= prev_step[idx]) | (step <= (1.0 - q) * floor))
        done = (bound[idx] <= tol) | (post <= tol) | stalled
        polish[idx] = stalled & ~((bound[idx] <= tol) | (post <= tol))
        slack[idx] = (post + floor) / (1.0 - q)
        bound[idx] = np.minimum(bound[idx], post)
        prev_step[idx] = step
        active[idx] = ~done
        if trace:
            iterates.append(s.copy())
    if variant == "uniqueness" and polish.any():
        _newton_polish(traj, r1, t, s, polish, slack)
    tau = s
    T = t - tau
    return RetardedSolution(_squeeze(tau), _squeeze(T), _squeeze(n_iter), _squeeze(bound), iterates)


def _newton_polish(traj, r1, t, s, mask, slack):
    # A slowly contracting sweep (q near 1) stalls in rounding noise about
    # noise/(1-q) away from the root. One Newton step on s - t + |r1 - r2(s)|
    # removes that bias; it is kept only if it stays near the Banach estimate.
    try:
        v = traj.velocity(s[mask])
    except SmoothnessError:
        return
    d = r1[mask] - traj.position(s[mask])
    dist = _dist(d, 0.0)
    e = d / dist[..., None]
    g = s[mask] - t[mask] + dist
    delta = g / (1.0 - np.sum(e * v, axis=-1))
    ok = np.abs(delta) <= slack[mask]
    idx = np.flatnonzero(mask.ravel())[ok.ravel()]
    flat = s.reshape(-1)
    flat[idx] -= delta.ravel()[ok.ravel()]


def explicit_rate_bound(traj: Trajectory, r1, t, n, q: float):
    """The rate estimate q^n/(1-q) |t - |r1 - r2(t)||.

    It is the Banach bound of the s_0 = 0 iteration of the explicit variant.
    It is not invariant under a shift of the time origin and does not bound
    the error of iterates converging to the retarded time in general.
    """
    r1, t = _prepare(r1, t)
    return q**n / (1.0 - q) * np.abs(t - _dist(r1, traj.position(t)))


def oracle_retarded_time(traj: Trajectory, r1, t, q: Optional[float] = None, tol: float = 1e-14):
    """Bisection on g(s) = s - t + |r1 - r2(s)|, which is strictly increasing."""
    r1, t = _prepare(r1, t)
    if q is None:
        q = speed_bound(traj, t)
    if not q < 1.0:
        raise ContractionError(f"contraction violated: velocity bound q = {q:.6g} >= 1")
    g = lambda s: s - t + _dist(r1, traj.position(s))
    d = _dist(r1, traj.position(t))
    lo = t - d / (1.0 - q)
    hi = t.copy()
    assert np.all(g(lo) <= 0) and np.all(g(hi) >= 0), "bisection bracket failed"
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        stuck = (mid <= lo) | (mid >= hi)
        if np.all((hi - lo <= tol) | stuck):
            break
        gm = g(mid)
        lo = np.where(gm < 0, mid, lo)
        hi = np.where(gm >= 0, mid, hi)
    return _squeeze(0.5 * (lo + hi))
