"""Pure-numpy sampling kernels.

Fallback implementations of the hot field-sampling loops: batched trilinear
interpolation and the central-difference gradient / Hessian stencils built on
it.  A compiled Cython twin (``stimfield._kernels``) provides the same
signatures; ``stimfield.kernels`` picks whichever is available at import time.

All functions take the raw value array of a cell-centered volume (shape
``(nx, ny, nz)``, float64), the grid origin/spacing, and an ``(n, 3)`` array
of world-space points.  Out-of-hull points raise ``OutOfDomainError`` naming
the first offending point index.
"""

from __future__ import annotations

import numpy as np

from .errors import OutOfDomainError

BACKEND_NAME = "python"


def _fractional_index(values, origin, spacing, pts):
    f = (pts - origin[np.newaxis, :]) / spacing[np.newaxis, :]
    dims = np.asarray(values.shape, dtype=np.float64)
    bad = np.any((f < 0.0) | (f > dims[np.newaxis, :] - 1.0), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise OutOfDomainError(
            f"point {i} at {pts[i].tolist()} lies outside the grid hull"
        )
    return f


def trilinear_many(values, origin, spacing, pts):
    """Trilinearly interpolate ``values`` at each point. Returns ``(n,)``."""
    f = _fractional_index(values, origin, spacing, pts)
    dims = values.shape
    i0 = np.floor(f).astype(np.intp)
    for a in range(3):
        np.minimum(i0[:, a], dims[a] - 2, out=i0[:, a])
        np.maximum(i0[:, a], 0, out=i0[:, a])
    w = f - i0
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]

    v000 = values[ix, iy, iz]
    v100 = values[ix + 1, iy, iz]
    v010 = values[ix, iy + 1, iz]
    v110 = values[ix + 1, iy + 1, iz]
    v001 = values[ix, iy, iz + 1]
    v101 = values[ix + 1, iy, iz + 1]
    v011 = values[ix, iy + 1, iz + 1]
    v111 = values[ix + 1, iy + 1, iz + 1]

    c00 = v000 * (1.0 - wx) + v100 * wx
    c10 = v010 * (1.0 - wx) + v110 * wx
    c01 = v001 * (1.0 - wx) + v101 * wx
    c11 = v011 * (1.0 - wx) + v111 * wx
    c0 = c00 * (1.0 - wy) + c10 * wy
    c1 = c01 * (1.0 - wy) + c11 * wy
    return c0 * (1.0 - wz) + c1 * wz


def gradient_many(values, origin, spacing, pts, step):
    """Central-difference gradient of the interpolated field.

    ``step`` is the per-axis differencing step in mm (normally the solver
    grid spacing, not the interpolation cell).  Returns ``(n, 3)``.
    """
    n = pts.shape[0]
    out = np.empty((n, 3), dtype=np.float64)
    for a in range(3):
        shift = np.zeros(3)
        shift[a] = step[a]
        up = trilinear_many(values, origin, spacing, pts + shift)
        dn = trilinear_many(values, origin, spacing, pts - shift)
        out[:, a] = (up - dn) / (2.0 * step[a])
    return out


def hessian_many(values, origin, spacing, pts, step):
    """Central second differences of the interpolated field.

    Returns ``(n, 6)`` with components ordered xx, yy, zz, xy, xz, yz.
    Exact for globally quadratic fields sampled onto the grid.
    """
    n = pts.shape[0]
    out = np.empty((n, 6), dtype=np.float64)
    center = trilinear_many(values, origin, spacing, pts)
    eye = np.eye(3)
    for a in range(3):
        sh = eye[a] * step[a]
        up = trilinear_many(values, origin, spacing, pts + sh)
        dn = trilinear_many(values, origin, spacing, pts - sh)
        out[:, a] = (up - 2.0 * center + dn) / (step[a] * step[a])
    pairs = ((0, 1, 3), (0, 2, 4), (1, 2, 5))
    for a, b, col in pairs:
        sa = eye[a] * step[a]
        sb = eye[b] * step[b]
        upp = trilinear_many(values, origin, spacing, pts + sa + sb)
        upm = trilinear_many(values, origin, spacing, pts + sa - sb)
        ump = trilinear_many(values, origin, spacing, pts - sa + sb)
        umm = trilinear_many(values, origin, spacing, pts - sa - sb)
        out[:, col] = (upp - upm - ump + umm) / (4.0 * step[a] * step[b])
    return out
