"""Finite-difference operators and numerical residual suites.

Every suite evaluates its residual on a point set at step h and at h/2 and
reports max/RMS norms plus the observed order log2(res_h / res_h/2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import stencil
from .fields import (boost_em_field, feynman_field, fundamental_fields,
                     lw_potentials)
from .trajectory import Trajectory, boost_trajectory, lorentz_boost

SCHEMA_VERSION = "1.0"
VERIFY_TOL = 1e-14
# below this the residual is indistinguishable from rounding noise
NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class FieldSampler:
    """A field f(r1, t) of the given arity (1 for scalar, 3 for vector)."""

    fn: Callable
    arity: int = 1

    def __call__(self, r1, t):
        out = np.asarray(self.fn(r1, t), float)
        return out.reshape(out.shape[:1] + (self.arity,)) if out.ndim <= 1 else out


def fd_operators(s, r1, t, h: float, ht: Optional[float] = None) -> dict:
    """Central-difference grad/div/curl/d_t/d_tt/laplacian/dalembertian at events.

    Second derivatives use the 3-point stencil, so every operator is second
    order in h. The d'Alembertian is laplacian - d_tt.
    """
    if not isinstance(s, FieldSampler):
        s = FieldSampler(s, 1)
    ht = h if ht is None else ht
    single = np.asarray(r1).ndim == 1
    vals = stencil.evaluate(s, r1, t, h, ht)
    d = stencil.derivatives(vals, h, ht)
    lap = d["second"].sum(axis=1)
    out = {"d_t": d["dt"], "d_tt": d["dtt"], "laplacian": lap, "dalembertian": lap - d["dtt"]}
    if vals.shape[-1] == 1:
        out = {k: x[..., 0] for k, x in out.items()}
        out["grad"] = d["grad"][..., 0]
    else:
        out["jacobian"] = d["grad"]
        if vals.shape[-1] == 3:
            out["div"] = stencil.divergence(d["grad"])
            out["curl"] = stencil.curl(d["grad"])
    if single:
        out = {k: x[0] for k, x in out.items()}
    return out


@dataclass
class ResidualReport:
    """Per-equation residual norms at step h, with optional orders from h/2."""

    h: float
    equations: dict = field(default_factory=dict)
    name: str = ""

    def max(self, eq):
        return self.equations[eq]["max"]

    def order(self, eq):
        return self.equations[eq].get("order")

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "suite": self.name, "h": self.h,
                "equations": self.equations}


def _norms(res):
    res = np.asarray(res, float)
    return {"max": float(np.max(res)), "rms": float(np.sqrt(np.mean(res**2)))}


def _report(name, fn, points, h, with_order):
    coarse = fn(points, h)
    eqs = {k: _norms(v) for k, v in coarse.items()}
    if with_order:
        fine = fn(points, h / 2)
        for k, v in fine.items():
            mc, mf = eqs[k]["max"], float(np.max(v))
            eqs[k]["max_half"] = mf
            eqs[k]["order"] = float(np.log2(mc / mf)) if mf > NOISE_FLOOR and mc > NOISE_FLOOR else None
    return ResidualReport(h=h, equations=eqs, name=name)


def shell_points(traj: Trajectory, n: int = 100, seed: int = 0, rmin: float = 2.0,
                 rmax: float = 5.0, times=(-1.0, 0.0, 1.0)):
    """Random events at distance [rmin, rmax] from the source position at 3 times."""
    rng = np.random.default_rng(seed)
    tt = np.asarray(times, float)[rng.integers(0, len(times), n)]
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    rad = rng.uniform(rmin, rmax, n)
    return traj.position(tt) + d * rad[:, None], tt


# --- corrupted fields used as negative controls -------------------------

def _modulate(r):
    return 1.0 + 0.1 * r[..., 0]


CONTROLS = {
    # Coulomb form at the retarded position and no magnetic field
    "static_coulomb": lambda r, ff, E, B: (ff.u[..., None] ** 2 * ff.e, np.zeros_like(B)),
    # true field times a position-dependent factor
    "modulated": lambda r, ff, E, B: (_modulate(r)[..., None] * E, _modulate(r)[..., None] * B),
}
CONTROL_TARGETS = {
    "maxwell": {"static_coulomb": ("faraday", "ampere"),
                "modulated": ("div_E", "faraday", "div_B", "ampere")},
    "wave_gauge": {"modulated": ("wave_phi", "wave_A", "gauge", "wave_E", "wave_B")},
}


def _em_sampler(traj, tol, corrupt=None):
    def sample(r, t):
        ff = fundamental_fields(traj, r, t, tol=tol)
        em = feynman_field(ff)
        E, B = em.E, em.B
        if corrupt is not None:
            E, B = CONTROLS[corrupt](r, ff, E, B)
        return np.concatenate([E, B], axis=-1)
    return sample


def _scale(vals, normalize=True):
    # max(|E|, |B|, u^2) at the stencil center; u^2 is carried in the last column
    if not normalize:
        return np.ones(vals.shape[1])
    E, B, u2 = vals[0, :, 0:3], vals[0, :, 3:6], vals[0, :, -1]
    return np.maximum(np.maximum(np.linalg.norm(E, axis=1), np.linalg.norm(B, axis=1)), u2)


def maxwell_residuals(traj: Trajectory, points, h: float, tol: float = VERIFY_TOL,
                      with_order: bool = True, corrupt: Optional[str] = None,
                      normalize: bool = True) -> ResidualReport:
    """div E, curl E + d_t B, div B, curl B - d_t E for the closed-form field.

    Residuals are divided by max(|E|, |B|, u^2) at each point unless
    normalize is False.
    """
    em = _em_sampler(traj, tol, corrupt)

    def sampler(r, t):
        ff = fundamental_fields(traj, r, t, tol=tol)
        return np.concatenate([em(r, t), (ff.u**2)[..., None]], axis=-1)

    def run(pts, hh):
        r1, t = pts
        vals = stencil.evaluate(sampler, r1, t, hh, hh)
        d = stencil.derivatives(vals, hh, hh)
        jE, jB = d["grad"][:, :, 0:3], d["grad"][:, :, 3:6]
        dE, dB = d["dt"][:, 0:3], d["dt"][:, 3:6]
        sc = _scale(vals, normalize)
        return {
            "div_E": np.abs(stencil.divergence(jE)) / sc,
            "faraday": np.linalg.norm(stencil.curl(jE) + dB, axis=1) / sc,
            "div_B": np.abs(stencil.divergence(jB)) / sc,
            "ampere": np.linalg.norm(stencil.curl(jB) - dE, axis=1) / sc,
        }

    return _report("maxwell" + (f"[{corrupt}]" if corrupt else ""), run, points, h, with_order)


def wave_gauge_residuals(traj: Trajectory, points, h: float, tol: float = VERIFY_TOL,
                         with_order: bool = True, corrupt: Optional[str] = None,
                         normalize: bool = True) -> ResidualReport:
    """Box phi, Box A, div A + d_t phi, Box E, Box B (Box = laplacian - d_tt)."""
    def sampler(r, t):
        ff = fundamental_fields(traj, r, t, tol=tol)
        p = lw_potentials(ff)
        em = feynman_field(ff)
        cols = np.concatenate([em.E, em.B, p.phi[..., None], p.A], axis=-1)
        if corrupt is not None:
            if corrupt != "modulated":
                raise ValueError(f"control {corrupt!r} does not apply to the wave/gauge suite")
            cols = _modulate(r)[..., None] * cols
        return np.concatenate([cols, (ff.u**2)[..., None]], axis=-1)

    def run(pts, hh):
        r1, t = pts
        vals = stencil.evaluate(sampler, r1, t, hh, hh)
        d = stencil.derivatives(vals, hh, hh)
        box = d["second"].sum(axis=1) - d["dtt"]
        div_A = stencil.divergence(d["grad"][:, :, 7:10])
        sc = _scale(vals, normalize)
        return {
            "wave_phi": np.abs(box[:, 6]) / sc,
            "wave_A": np.linalg.norm(box[:, 7:10], axis=1) / sc,
            "gauge": np.abs(div_A + d["dt"][:, 6]) / sc,
            "wave_E": np.linalg.norm(box[:, 0:3], axis=1) / sc,
            "wave_B": np.linalg.norm(box[:, 3:6], axis=1) / sc,
        }

    return _report("wave_gauge" + (f"[{corrupt}]" if corrupt else ""), run, points, h, with_order)


def negative_controls(traj: Trajectory, points, h: float, suite: str = "maxwell",
                      tol: float = VERIFY_TOL) -> dict:
    """Ratio of corrupted-field to true-field residuals on each targeted equation."""
    fn = maxwell_residuals if suite == "maxwell" else wave_gauge_residuals
    true = fn(traj, points, h, tol=tol, with_order=False)
    out = {}
    for name, eqs in CONTROL_TARGETS[suite].items():
        bad = fn(traj, points, h, tol=tol, with_order=False, corrupt=name)
        out[name] = {eq: bad.max(eq) / max(true.max(eq), np.finfo(float).tiny) for eq in eqs}
    return out


def gaussian(x):
    return np.exp(-x**2)


def gaussian_dd(x):
    return (4 * x**2 - 2) * np.exp(-x**2)


def plane_wave_check(profile: Callable, v: float, points, h: float,
                     with_order: bool = False) -> ResidualReport:
    """Residual of Box f(x - v t); zero exactly when v = +-1."""
    def sampler(r, t):
        return profile(r[..., 0] - v * t)

    def run(pts, hh):
        r1, t = pts
        return {"dalembertian": np.abs(fd_operators(sampler, r1, t, hh)["dalembertian"])}

    return _report(f"plane_wave[v={v:g}]", run, points, h, with_order)


def covariance_check(traj: Trajectory, u, points, tol: float = 1e-12) -> ResidualReport:
    """Compare the boosted field with the field of the boosted trajectory."""
    r1, t = points
    em = feynman_field(fundamental_fields(traj, r1, t, tol=tol))
    expected = boost_em_field(em, u)
    rp, tp = lorentz_boost(r1, t, u)
    got = feynman_field(fundamental_fields(boost_trajectory(traj, u), rp, tp, tol=tol))
    res = {"E": np.linalg.norm(expected.E - got.E, axis=-1),
           "B": np.linalg.norm(expected.B - got.B, axis=-1)}
    return ResidualReport(h=0.0, equations={k: _norms(x) for k, x in res.items()},
                          name="covariance")
