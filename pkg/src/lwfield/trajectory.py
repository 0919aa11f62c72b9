"""Admissible source trajectories, their kinematics, and Lorentz boosts.

Units are natural throughout: c = 1. Evaluators accept a scalar time or an
array of times and return positions with a trailing axis of length 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import AdmissibilityError, SmoothnessError

DEFAULT_WINDOW = 10.0


class Kinematics(NamedTuple):
    r: np.ndarray
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray


@dataclass(frozen=True)
class KinematicBounds:
    q: float
    A: float
    t1: float


def _times(t):
    return np.asarray(t, dtype=float)


def _const(vec, t):
    t = _times(t)
    return np.broadcast_to(np.asarray(vec, dtype=float), t.shape + (3,)).copy()


class Trajectory:
    """Base class. Subclasses provide position and its first three derivatives."""

    kind = "analytic"

    def position(self, t):
        raise NotImplementedError

    def velocity(self, t):
        raise SmoothnessError("insufficient smoothness: no velocity evaluator")

    def acceleration(self, t):
        raise SmoothnessError("insufficient smoothness: no acceleration evaluator")

    def jerk(self, t):
        raise SmoothnessError("insufficient smoothness: no jerk evaluator")

    def speed_bound(self) -> Optional[float]:
        """Analytic sup of |v| over all times, when known."""
        return None

    def accel_bound(self) -> Optional[float]:
        return None

    def to_config(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no config form")


@dataclass(frozen=True)
class Rest(Trajectory):
    r0: tuple = (0.0, 0.0, 0.0)
    kind = "rest"

    def position(self, t):
        return _const(self.r0, t)

    def velocity(self, t):
        return _const((0.0, 0.0, 0.0), t)

    def acceleration(self, t):
        return _const((0.0, 0.0, 0.0), t)

    def jerk(self, t):
        return _const((0.0, 0.0, 0.0), t)

    def speed_bound(self):
        return 0.0

    def accel_bound(self):
        return 0.0

    def to_config(self):
        return {"kind": "rest", "r0": list(self.r0)}


@dataclass(frozen=True)
class Uniform(Trajectory):
    """r(t) = r0 + v t."""

    v: tuple = (0.0, 0.0, 0.0)
    r0: tuple = (0.0, 0.0, 0.0)
    kind = "uniform"

    def position(self, t):
        t = _times(t)
        return np.asarray(self.r0, float) + t[..., None] * np.asarray(self.v, float)

    def velocity(self, t):
        return _const(self.v, t)

    def acceleration(self, t):
        return _const((0.0, 0.0, 0.0), t)

    def jerk(self, t):
        return _const((0.0, 0.0, 0.0), t)

    def speed_bound(self):
        return float(np.linalg.norm(self.v))

    def accel_bound(self):
        return 0.0

    def to_config(self):
        return {"kind": "uniform", "v": list(self.v), "r0": list(self.r0)}


@dataclass(frozen=True)
class Circular(Trajectory):
    """Circle of the given radius in the plane z = center_z, angle omega*t + phase."""

    radius: float = 1.0
    omega: float = 0.3
    center: tuple = (0.0, 0.0, 0.0)
    phase: float = 0.0
    kind = "circular"

    def _angle(self, t):
        return self.omega * _times(t) + self.phase

    def _planar(self, c, s, scale):
        out = np.zeros(c.shape + (3,))
        out[..., 0] = scale * c
        out[..., 1] = scale * s
        return out

    def position(self, t):
        th = self._angle(t)
        return np.asarray(self.center, float) + self._planar(np.cos(th), np.sin(th), self.radius)

    def velocity(self, t):
        th = self._angle(t)
        return self._planar(-np.sin(th), np.cos(th), self.radius * self.omega)

    def acceleration(self, t):
        th = self._angle(t)
        return self._planar(-np.cos(th), -np.sin(th), self.radius * self.omega**2)

    def jerk(self, t):
        th = self._angle(t)
        return self._planar(np.sin(th), -np.cos(th), self.radius * self.omega**3)

    def speed_bound(self):
        return abs(self.radius * self.omega)

    def accel_bound(self):
        return abs(self.radius * self.omega**2)

    def to_config(self):
        return {"kind": "circular", "radius": self.radius, "omega": self.omega,
                "center": list(self.center), "phase": self.phase}


def _call_vec(fn, t):
    t = _times(t)
    out = np.asarray(fn(t), dtype=float)
    if out.shape == t.shape + (3,):
        return out
    # fall back for callables that only understand scalars
    flat = [np.asarray(fn(float(s)), dtype=float) for s in t.ravel()]
    return np.stack(flat).reshape(t.shape + (3,)) if flat else np.zeros(t.shape + (3,))


@dataclass(frozen=True)
class Analytic(Trajectory):
    """User-supplied path. Derivative callables are optional; missing ones
    raise SmoothnessError when requested."""

    pos: Callable
    vel: Optional[Callable] = None
    acc: Optional[Callable] = None
    jrk: Optional[Callable] = None
    q_bound: Optional[float] = None
    a_bound: Optional[float] = None
    kind = "analytic"

    def position(self, t):
        return _call_vec(self.pos, t)

    def velocity(self, t):
        if self.vel is None:
            return super().velocity(t)
        return _call_vec(self.vel, t)

    def acceleration(self, t):
        if self.acc is None:
            return super().acceleration(t)
        return _call_vec(self.acc, t)

    def jerk(self, t):
        if self.jrk is None:
            return super().jerk(t)
        return _call_vec(self.jrk, t)

    def speed_bound(self):
        return self.q_bound

    def accel_bound(self):
        return self.a_bound


def eval_kinematics(traj: Trajectory, t) -> Kinematics:
    """Position, velocity, acceleration and jerk of the path at t."""
    if not np.all(np.isfinite(_times(t))):
        raise ValueError("time must be finite")
    return Kinematics(traj.position(t), traj.velocity(t), traj.acceleration(t), traj.jerk(t))


def admissibility_check(traj: Trajectory, t1: float, n_samples: int = 201,
                        window: float = DEFAULT_WINDOW) -> KinematicBounds:
    """Sampled velocity and acceleration bounds on [t1 - window, t1].

    For catalog kinds the analytic tail bound is folded in as well.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    ts = np.linspace(t1 - window, t1, n_samples)
    speed = np.linalg.norm(traj.velocity(ts), axis=-1)
    acc = np.linalg.norm(traj.acceleration(ts), axis=-1)
    q = float(speed.max())
    A = float(acc.max())
    if traj.speed_bound() is not None:
        q = max(q, traj.speed_bound())
    if traj.accel_bound() is not None:
        A = max(A, traj.accel_bound())
    if not q < 1.0:
        bad = ts[np.argmax(speed)]
        raise AdmissibilityError(f"not relativistically admissible: |v| = {q:.6g} at t = {bad:.6g}")
    return KinematicBounds(q=q, A=A, t1=float(t1))


def velocity_bound_from_energy(m0: float, k: float) -> float:
    """Largest speed a body of rest mass m0 can reach with kinetic energy k."""
    if m0 <= 0:
        raise ValueError("rest mass must be positive")
    if k < 0:
        raise ValueError("kinetic energy must be non-negative")
    # 1 - 1/(1+x)^2 rewritten as x(2+x)/(1+x)^2 to avoid cancellation at small x
    x = k / m0
    return math.sqrt(x * (2.0 + x)) / (1.0 + x)


def gamma_factor(u) -> float:
    speed2 = float(np.dot(u, u))
    if not speed2 < 1.0:
        raise ValueError(f"boost speed must be below 1, got {math.sqrt(speed2):.6g}")
    return 1.0 / math.sqrt(1.0 - speed2)


def lorentz_boost(r, t, u):
    """Coordinates (r', t') of the event (r, t) in a frame moving with velocity u.

    Along the unit vector n = u/|u|: r'_par = g (r_par - |u| t), t' = g (t - u.r);
    components orthogonal to u are unchanged.
    """
    u = np.asarray(u, dtype=float)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    g = gamma_factor(u)
    speed = float(np.linalg.norm(u))
    if speed == 0.0:
        return r.copy(), t.copy()
    n = u / speed
    r_par = r @ n
    r_new = r + ((g - 1.0) * r_par - g * speed * t)[..., None] * n
    t_new = g * (t - speed * r_par)
    return r_new, t_new


@dataclass(frozen=True)
class Boosted(Trajectory):
    """The path `base` as seen from a frame moving with velocity u."""

    base: Trajectory
    u: tuple
    kind = "boosted"

    @property
    def gamma(self):
        return gamma_factor(self.u)

    def source_time(self, tp):
        """Base-frame time t whose event maps to boosted time tp."""
        u = np.asarray(self.u, float)
        g = self.gamma
        tp = _times(tp)
        speed = float(np.linalg.norm(u))
        if speed == 0.0:
            return tp.copy()
        gfun = lambda t: g * (t - self.base.position(t) @ u)
        slope = lambda t: g * (1.0 - self.base.velocity(t) @ u)
        # g' >= g (1 - |u|) for any admissible path, which brackets the root
        m = g * (1.0 - speed)
        t = tp / g
        f = gfun(t) - tp
        lo = np.where(f > 0, t - f / m, t)
        hi = np.where(f > 0, t, t - f / m)
        for _ in range(200):
            f = gfun(t) - tp
            lo = np.where(f <= 0, t, lo)
            hi = np.where(f >= 0, t, hi)
            t_new = t - f / slope(t)
            outside = (t_new < lo) | (t_new > hi)
            t_new = np.where(outside, 0.5 * (lo + hi), t_new)
            done = np.abs(t_new - t) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(t))
            t = t_new
            if np.all(done):
                break
        else:
            raise AssertionError("boosted-time root solve did not converge")
        return t

    def _parts(self, tp, order):
        u = np.asarray(self.u, float)
        g = self.gamma
        speed = float(np.linalg.norm(u))
        n = u / speed if speed > 0 else np.zeros(3)
        t = self.source_time(tp)
        par = lambda x: ((g - 1.0) * (x @ n))[..., None] * n
        v = self.base.velocity(t)
        N = v + par(v) - g * u
        D = g * (1.0 - v @ u)
        out = {"t": t, "N": N, "D": D}
        if order >= 2:
            a = self.base.acceleration(t)
            out["N1"] = a + par(a)
            out["D1"] = -g * (a @ u)
        if order >= 3:
            j = self.base.jerk(t)
            out["N2"] = j + par(j)
            out["D2"] = -g * (j @ u)
        return out

    def position(self, tp):
        t = self.source_time(tp)
        r, _ = lorentz_boost(self.base.position(t), t, self.u)
        return r

    def velocity(self, tp):
        p = self._parts(tp, 1)
        return p["N"] / p["D"][..., None]

    def acceleration(self, tp):
        p = self._parts(tp, 2)
        D = p["D"][..., None]
        W = p["N1"] * D - p["N"] * p["D1"][..., None]
        return W / D**3

    def jerk(self, tp):
        p = self._parts(tp, 3)
        D = p["D"][..., None]
        D1 = p["D1"][..., None]
        W = p["N1"] * D - p["N"] * D1
        W1 = p["N2"] * D - p["N"] * p["D2"][..., None]
        return (W1 * D - 3.0 * W * D1) / D**5

    def speed_bound(self):
        q = self.base.speed_bound()
        if q is None:
            return None
        s = float(np.linalg.norm(self.u))
        return (q + s) / (1.0 + q * s)

    def accel_bound(self):
        q, A = self.base.speed_bound(), self.base.accel_bound()
        if q is None or A is None:
            return None
        s = float(np.linalg.norm(self.u))
        return A * (1.0 + s) ** 2 / (self.gamma * (1.0 - s * q) ** 3)

    def to_config(self):
        return {"kind": "boosted", "u": list(self.u), "base": self.base.to_config()}


def boost_trajectory(traj: Trajectory, u) -> Boosted:
    """The same motion described in the frame moving with velocity u."""
    u = tuple(float(x) for x in np.asarray(u, dtype=float))
    gamma_factor(u)
    return Boosted(traj, u)


def from_config(cfg: dict) -> Trajectory:
    """Build a catalog trajectory from a `{kind, ...}` record."""
    kind = cfg.get("kind")
    vec = lambda key, default=(0.0, 0.0, 0.0): tuple(float(x) for x in cfg.get(key, default))
    if kind == "rest":
        return Rest(r0=vec("r0"))
    if kind == "uniform":
        return Uniform(v=vec("v"), r0=vec("r0"))
    if kind == "circular":
        return Circular(radius=float(cfg.get("radius", 1.0)), omega=float(cfg.get("omega", 0.3)),
                        center=vec("center"), phase=float(cfg.get("phase", 0.0)))
    if kind == "boosted":
        return boost_trajectory(from_config(cfg["base"]), cfg["u"])
    raise ValueError(f"unknown trajectory kind {kind!r}")
