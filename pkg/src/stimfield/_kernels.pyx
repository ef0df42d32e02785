# cython: language_level=3
"""Compiled sampling kernels.

Cython twin of ``stimfield._kernels_py``: batched trilinear interpolation and
the finite-difference gradient / Hessian stencils fused into single passes
over the point list, avoiding the intermediate arrays of the numpy fallback.
"""

import numpy as np

cimport numpy as cnp

from .errors import OutOfDomainError

BACKEND_NAME = "cython"


cdef inline double _tri(const double[:, :, ::1] v,
                        double ox, double oy, double oz,
                        double hx, double hy, double hz,
                        double px, double py, double pz,
                        int* status) noexcept nogil:
    cdef double fx = (px - ox) / hx
    cdef double fy = (py - oy) / hy
    cdef double fz = (pz - oz) / hz
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1], nz = v.shape[2]
    if fx < 0.0 or fx > nx - 1.0 or fy < 0.0 or fy > ny - 1.0 \
            or fz < 0.0 or fz > nz - 1.0:
        status[0] = 1
        return 0.0
    cdef Py_ssize_t ix = <Py_ssize_t>fx
    cdef Py_ssize_t iy = <Py_ssize_t>fy
    cdef Py_ssize_t iz = <Py_ssize_t>fz
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    if iz > nz - 2:
        iz = nz - 2
    cdef double wx = fx - ix
    cdef double wy = fy - iy
    cdef double wz = fz - iz
    cdef double c00 = v[ix, iy, iz] * (1.0 - wx) + v[ix + 1, iy, iz] * wx
    cdef double c10 = v[ix, iy + 1, iz] * (1.0 - wx) + v[ix + 1, iy + 1, iz] * wx
    cdef double c01 = v[ix, iy, iz + 1] * (1.0 - wx) + v[ix + 1, iy, iz + 1] * wx
    cdef double c11 = v[ix, iy + 1, iz + 1] * (1.0 - wx) + v[ix + 1, iy + 1, iz + 1] * wx
    cdef double c0 = c00 * (1.0 - wy) + c10 * wy
    cdef double c1 = c01 * (1.0 - wy) + c11 * wy
    return c0 * (1.0 - wz) + c1 * wz


def trilinear_many(const double[:, :, ::1] values, const double[::1] origin,
                   const double[::1] spacing, const double[:, ::1] pts):
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double hx = spacing[0], hy = spacing[1], hz = spacing[2]
    cdef Py_ssize_t i
    cdef int status = 0
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            out[i] = _tri(values, ox, oy, oz, hx, hy, hz,
                          pts[i, 0], pts[i, 1], pts[i, 2], &status)
            if status != 0:
                bad = i
                break
    if bad >= 0:
        raise OutOfDomainError(
            f"point {bad} at {np.asarray(pts[bad]).tolist()} lies outside the grid hull"
        )
    return out_arr


def gradient_many(const double[:, :, ::1] values, const double[::1] origin,
                  const double[::1] spacing, const double[:, ::1] pts, const double[::1] step):
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double hx = spacing[0], hy = spacing[1], hz = spacing[2]
    cdef double sx = step[0], sy = step[1], sz = step[2]
    cdef double px, py, pz, up, dn
    cdef Py_ssize_t i
    cdef int status = 0
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            px = pts[i, 0]; py = pts[i, 1]; pz = pts[i, 2]
            up = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py, pz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py, pz, &status)
            out[i, 0] = (up - dn) / (2.0 * sx)
            up = _tri(values, ox, oy, oz, hx, hy, hz, px, py + sy, pz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px, py - sy, pz, &status)
            out[i, 1] = (up - dn) / (2.0 * sy)
            up = _tri(values, ox, oy, oz, hx, hy, hz, px, py, pz + sz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px, py, pz - sz, &status)
            out[i, 2] = (up - dn) / (2.0 * sz)
            if status != 0:
                bad = i
                break
    if bad >= 0:
        raise OutOfDomainError(
            f"stencil of point {bad} at {np.asarray(pts[bad]).tolist()} "
            "lies outside the grid hull"
        )
    return out_arr


def hessian_many(const double[:, :, ::1] values, const double[::1] origin,
                 const double[::1] spacing, const double[:, ::1] pts, const double[::1] step):
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty((n, 6), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double hx = spacing[0], hy = spacing[1], hz = spacing[2]
    cdef double sx = step[0], sy = step[1], sz = step[2]
    cdef double px, py, pz, c, up, dn, upp, upm, ump, umm
    cdef Py_ssize_t i
    cdef int status = 0
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            px = pts[i, 0]; py = pts[i, 1]; pz = pts[i, 2]
            c = _tri(values, ox, oy, oz, hx, hy, hz, px, py, pz, &status)
            up = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py, pz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py, pz, &status)
            out[i, 0] = (up - 2.0 * c + dn) / (sx * sx)
            up = _tri(values, ox, oy, oz, hx, hy, hz, px, py + sy, pz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px, py - sy, pz, &status)
            out[i, 1] = (up - 2.0 * c + dn) / (sy * sy)
            up = _tri(values, ox, oy, oz, hx, hy, hz, px, py, pz + sz, &status)
            dn = _tri(values, ox, oy, oz, hx, hy, hz, px, py, pz - sz, &status)
            out[i, 2] = (up - 2.0 * c + dn) / (sz * sz)
            upp = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py + sy, pz, &status)
            upm = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py - sy, pz, &status)
            ump = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py + sy, pz, &status)
            umm = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py - sy, pz, &status)
            out[i, 3] = (upp - upm - ump + umm) / (4.0 * sx * sy)
            upp = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py, pz + sz, &status)
            upm = _tri(values, ox, oy, oz, hx, hy, hz, px + sx, py, pz - sz, &status)
            ump = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py, pz + sz, &status)
            umm = _tri(values, ox, oy, oz, hx, hy, hz, px - sx, py, pz - sz, &status)
            out[i, 4] = (upp - upm - ump + umm) / (4.0 * sx * sz)
            upp = _tri(values, ox, oy, oz, hx, hy, hz, px, py + sy, pz + sz, &status)
            upm = _tri(values, ox, oy, oz, hx, hy, hz, px, py + sy, pz - sz, &status)
            ump = _tri(values, ox, oy, oz, hx, hy, hz, px, py - sy, pz + sz, &status)
            umm = _tri(values, ox, oy, oz, hx, hy, hz, px, py - sy, pz - sz, &status)
            out[i, 5] = (upp - upm - ump + umm) / (4.0 * sy * sz)
            if status != 0:
                bad = i
                break
    if bad >= 0:
        raise OutOfDomainError(
            f"stencil of point {bad} at {np.asarray(pts[bad]).tolist()} "
            "lies outside the grid hull"
        )
    return out_arr
