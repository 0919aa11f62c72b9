"""Fundamental fields of a moving point source and the fields built from them.

All fields are per unit source charge in natural units (c = 1).
Vectorized: r1 may be (3,) or (N, 3), t scalar or (N,).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stencil
from .errors import SingularityError
from .retarded import DEFAULT_TOL, retarded_time
from .trajectory import Trajectory, gamma_factor

T_MIN = 1e-9


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _col(x):
    return np.asarray(x)[..., None]


@dataclass(frozen=True)
class FundamentalFields:
    tau: np.ndarray
    T: np.ndarray
    u: np.ndarray
    r12: np.ndarray
    e: np.ndarray
    v: np.ndarray
    a: np.ndarray
    adot: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class EmField:
    E: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class Potentials:
    phi: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class PartialDerivatives:
    grad_T: np.ndarray
    grad_u: np.ndarray
    grad_tau: np.ndarray
    grad_z: np.ndarray
    Di_v: np.ndarray   # [..., i, j] = D_i v_j
    Di_e: np.ndarray   # [..., i, j] = D_i e_j
    DT: np.ndarray
    Du: np.ndarray
    Dtau: np.ndarray
    Dz: np.ndarray
    Dv: np.ndarray
    De: np.ndarray

    def formulas(self) -> dict:
        """The sixteen derivative formulas by name.

        D_i X and grad X share values; both spellings are listed because the
        derivative theorem states them separately.
        """
        return {
            "D_iT": self.grad_T, "D_iu": self.grad_u, "D_iv": self.Di_v,
            "D_itau": self.grad_tau, "D_ie": self.Di_e, "D_iz": self.grad_z,
            "grad_T": self.grad_T, "grad_u": self.grad_u, "grad_z": self.grad_z,
            "grad_tau": self.grad_tau,
            "DT": self.DT, "Du": self.Du, "Dtau": self.Dtau, "Dz": self.Dz,
            "Dv": self.Dv, "De": self.De,
        }


def fundamental_fields(traj: Trajectory, r1, t, tol: float = DEFAULT_TOL,
                       t_min: float = T_MIN, q=None) -> FundamentalFields:
    sol = retarded_time(traj, r1, t, tol=tol, q=q)
    tau = np.asarray(sol.tau)
    r1 = np.broadcast_to(np.asarray(r1, float), tau.shape + (3,))
    r12 = r1 - traj.position(tau)
    T = np.sqrt(_dot(r12, r12))
    if np.any(T < t_min):
        raise SingularityError(f"on-trajectory singularity: delay {float(np.min(T)):.3g} < {t_min:g}")
    u = 1.0 / T
    e = r12 * _col(u)
    v = traj.velocity(tau)
    a = traj.acceleration(tau)
    adot = traj.jerk(tau)
    z = 1.0 / (1.0 - _dot(e, v))
    return FundamentalFields(tau, T, u, r12, e, v, a, adot, z)


def analytic_partials(ff: FundamentalFields) -> PartialDerivatives:
    u, z, e, v, a = ff.u, ff.z, ff.e, ff.v, ff.a
    U, Z = _col(u), _col(z)
    eda = _col(_dot(e, a))
    vdv = _col(_dot(v, v))
    grad_T = Z * e
    grad_z = -Z**3 * eda * e - U * Z**3 * e + U * Z**2 * e + U * Z**2 * v + U * Z**3 * vdv * e
    eye = np.eye(3)
    Di_v = -(Z * e)[..., :, None] * a[..., None, :]
    Di_e = (-(U * Z * e)[..., :, None] * e[..., None, :] + U[..., None] * eye
            + (U * Z * e)[..., :, None] * v[..., None, :])
    Dz = u * z - 2 * u * z**2 + z**3 * eda[..., 0] + u * z**3 - u * z**3 * vdv[..., 0]
    return PartialDerivatives(
        grad_T=grad_T,
        grad_u=-Z * U**2 * e,
        grad_tau=-Z * e,
        grad_z=grad_z,
        Di_v=Di_v,
        Di_e=Di_e,
        DT=1.0 - z,
        Du=z * u**2 - u**2,
        Dtau=z,
        Dz=Dz,
        Dv=Z * a,
        De=-U * e + U * Z * e - U * Z * v,
    )


def feynman_field(ff: FundamentalFields) -> EmField:
    """Closed-form electric and magnetic field; B = e x E."""
    u, z, e, v, a = ff.u, ff.z, ff.e, ff.v, ff.a
    U, Z = _col(u), _col(z)
    eda = _col(_dot(e, a))
    vdv = _col(_dot(v, v))
    E = (-U * Z**2 * a + U * Z**3 * eda * e - U * Z**3 * eda * v
         + U**2 * Z**3 * e - U**2 * Z**3 * vdv * e - U**2 * Z**3 * v + U**2 * Z**3 * vdv * v)
    return EmField(E, np.cross(e, E))


def feynman_b_fourterm(ff: FundamentalFields) -> np.ndarray:
    """B written out term by term, without forming E first."""
    u, z, e, v, a = ff.u, ff.z, ff.e, ff.v, ff.a
    U, Z = _col(u), _col(z)
    eda = _col(_dot(e, a))
    vdv = _col(_dot(v, v))
    exa = np.cross(e, a)
    exv = np.cross(e, v)
    return -U * Z**2 * exa - U * Z**3 * eda * exv - U**2 * Z**3 * exv + U**2 * Z**3 * vdv * exv


def lw_potentials(ff: FundamentalFields) -> Potentials:
    phi = ff.u * ff.z
    return Potentials(phi, _col(phi) * ff.v)


def feynman_field_fd(traj: Trajectory, r1, t, h: float = 1e-4, tol: float = DEFAULT_TOL) -> EmField:
    """E = u^2 e + u^-1 d_t(u^2 e) + d_t^2 e with time differences at fixed r1."""
    r1 = np.asarray(r1, float)
    t = np.broadcast_to(np.asarray(t, float), r1.shape[:-1])
    ks = np.arange(-2, 3)
    times = t[None, ...] + h * ks.reshape((5,) + (1,) * t.ndim)
    pts = np.broadcast_to(r1, times.shape + (3,))
    ff = fundamental_fields(traj, pts, times, tol=tol)
    e = ff.e
    w = _col(ff.u**2) * e
    d_w = (w[3] - w[1]) / (2 * h)
    dd_e = (-e[4] + 16 * e[3] - 30 * e[2] + 16 * e[1] - e[0]) / (12 * h**2)
    E = w[2] + _col(1.0 / ff.u[2]) * d_w + dd_e
    return EmField(E, np.cross(e[2], E))


def _potential_sampler(traj, tol):
    def sample(r, t):
        p = lw_potentials(fundamental_fields(traj, r, t, tol=tol))
        return np.concatenate([p.phi[..., None], p.A], axis=-1)
    return sample


def field_from_potentials(traj: Trajectory, r1, t, h=None, tol: float = DEFAULT_TOL) -> EmField:
    """E = -grad phi - d_t A and B = curl A by central differences."""
    r1 = np.asarray(r1, float)
    single = r1.ndim == 1
    if h is None:
        h = 1e-4 * max(1.0, float(np.max(np.linalg.norm(np.atleast_2d(r1), axis=-1))))
    vals = stencil.evaluate(_potential_sampler(traj, tol), r1, t, h, h)
    d = stencil.derivatives(vals, h, h)
    grad_phi = d["grad"][:, :, 0]
    jac_A = d["grad"][:, :, 1:]
    E = -grad_phi - d["dt"][:, 1:]
    B = stencil.curl(jac_A)
    if single:
        E, B = E[0], B[0]
    return EmField(E, B)


def boost_em_field(em: EmField, w) -> EmField:
    """Field seen from a frame moving with velocity w.

    Components along w are unchanged; transverse ones become
    g (E + w x B) and g (B - w x E).
    """
    w = np.asarray(w, float)
    g = gamma_factor(w)
    E = np.asarray(em.E, float)
    B = np.asarray(em.B, float)
    speed = float(np.linalg.norm(w))
    if speed == 0.0:
        return EmField(E.copy(), B.copy())
    n = w / speed
    E_par = _col(E @ n) * n
    B_par = _col(B @ n) * n
    E_new = E_par + g * (E - E_par + np.cross(w, B))
    B_new = B_par + g * (B - B_par - np.cross(w, E))
    return EmField(E_new, B_new)
