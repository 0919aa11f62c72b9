"""Central-difference stencils in space and time around a batch of events."""
from __future__ import annotations

import numpy as np

# center, +x, -x, +y, -y, +z, -z, +t, -t
OFFSETS = np.array([
    [0, 0, 0, 0],
    [1, 0, 0, 0], [-1, 0, 0, 0],
    [0, 1, 0, 0], [0, -1, 0, 0],
    [0, 0, 1, 0], [0, 0, -1, 0],
    [0, 0, 0, 1], [0, 0, 0, -1],
], dtype=float)


def stencil_events(r1, t, h, ht):
    """Events of the 9-point stencil, shaped (9, N, 3) and (9, N)."""
    r1 = np.atleast_2d(np.asarray(r1, float))
    t = np.broadcast_to(np.asarray(t, float), r1.shape[:1])
    R = r1[None, :, :] + h * OFFSETS[:, None, :3]
    T = t[None, :] + ht * OFFSETS[:, None, 3]
    return R, T


def evaluate(fn, r1, t, h, ht):
    """Sample fn on the stencil; returns values shaped (9, N, k)."""
    R, T = stencil_events(r1, t, h, ht)
    n = R.shape[1]
    try:
        vals = np.asarray(fn(R.reshape(-1, 3), T.reshape(-1)), float)
    except Exception as exc:
        # locate the first failing stencil offset for the message
        for k, off in enumerate(OFFSETS):
            try:
                fn(R[k], T[k])
            except Exception:
                raise type(exc)(f"{exc} [stencil offset {tuple(off)} * h]") from exc
        raise
    return vals.reshape(9, n, -1)


def derivatives(vals, h, ht):
    """First and second central differences from stencil samples (9, N, k)."""
    f0 = vals[0]
    first = np.stack([(vals[1 + 2 * i] - vals[2 + 2 * i]) / (2 * h) for i in range(3)], axis=1)
    second = np.stack([(vals[1 + 2 * i] - 2 * f0 + vals[2 + 2 * i]) / h**2 for i in range(3)], axis=1)
    dt = (vals[7] - vals[8]) / (2 * ht)
    dtt = (vals[7] - 2 * f0 + vals[8]) / ht**2
    return {"f": f0, "grad": first, "second": second, "dt": dt, "dtt": dtt}


def curl(jac):
    """Curl from a Jacobian J[..., i, j] = d_i F_j."""
    return np.stack([jac[..., 1, 2] - jac[..., 2, 1],
                     jac[..., 2, 0] - jac[..., 0, 2],
                     jac[..., 0, 1] - jac[..., 1, 0]], axis=-1)


def divergence(jac):
    return jac[..., 0, 0] + jac[..., 1, 1] + jac[..., 2, 2]
