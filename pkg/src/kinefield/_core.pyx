# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every routine here has a line-for-line twin in ``_core_py``. Both perform the
same floating point operations in the same order, so results agree bitwise;
``kinefield.kernels`` picks one at import time.
"""
import numpy as np

from libc.math cimport ceil, floor, isfinite


def matmul_bias(const double[:, ::1] X, const double[:, ::1] W, const double[::1] b, bint relu=False):
    """Return ``X @ W + b`` (optionally rectified) with a fixed summation order.

    Each output element starts at ``b[j]`` and accumulates ``X[i, k] * W[k, j]``
    for ``k = 0, 1, ...`` in sequence. A row's result never depends on the other
    rows in the batch, which BLAS does not guarantee.
    """
    cdef Py_ssize_t n = X.shape[0], kin = X.shape[1], m = W.shape[1]
    if W.shape[0] != kin or b.shape[0] != m:
        raise ValueError(f"shape mismatch: X {n}x{kin}, W {W.shape[0]}x{m}, b {b.shape[0]}")
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j, i0
    cdef double a0, a1, a2, a3, w
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = b[j]
        i0 = 0
        # four rows share each load of W[k, :]
        while i0 + 4 <= n:
            for k in range(kin):
                a0 = X[i0, k]
                a1 = X[i0 + 1, k]
                a2 = X[i0 + 2, k]
                a3 = X[i0 + 3, k]
                for j in range(m):
                    w = W[k, j]
                    out[i0, j] = out[i0, j] + a0 * w
                    out[i0 + 1, j] = out[i0 + 1, j] + a1 * w
                    out[i0 + 2, j] = out[i0 + 2, j] + a2 * w
                    out[i0 + 3, j] = out[i0 + 3, j] + a3 * w
            i0 += 4
        for i in range(i0, n):
            for k in range(kin):
                a0 = X[i, k]
                for j in range(m):
                    out[i, j] = out[i, j] + a0 * W[k, j]
        if relu:
            for i in range(n):
                for j in range(m):
                    if out[i, j] < 0.0:
                        out[i, j] = 0.0
    return out_arr


def splat_disks(const double[::1] u, const double[::1] v, const double[::1] radius,
                const long[::1] labels, Py_ssize_t width, Py_ssize_t height):
    """Paint labelled disks in the given order; later disks overwrite earlier ones.

    Pixel ``(row, col)`` is covered when its center ``(col + 0.5, row + 0.5)``
    lies within ``radius`` of ``(u, v)``. Non-finite entries are skipped.
    """
    grid_arr = np.zeros((height, width), dtype=np.int64)
    cdef long[:, ::1] grid = grid_arr
    cdef Py_ssize_t n = u.shape[0], p, row, col, c0, c1, r0, r1
    cdef double cu, cv, r, dx, dy
    cdef long lab
    with nogil:
        for p in range(n):
            cu = u[p]
            cv = v[p]
            r = radius[p]
            if not (isfinite(cu) and isfinite(cv) and isfinite(r)) or r < 0.0:
                continue
            lab = labels[p]
            c0 = <Py_ssize_t>ceil(cu - r - 0.5)
            c1 = <Py_ssize_t>floor(cu + r - 0.5)
            r0 = <Py_ssize_t>ceil(cv - r - 0.5)
            r1 = <Py_ssize_t>floor(cv + r - 0.5)
            if c0 < 0:
                c0 = 0
            if r0 < 0:
                r0 = 0
            if c1 > width - 1:
                c1 = width - 1
            if r1 > height - 1:
                r1 = height - 1
            for row in range(r0, r1 + 1):
                dy = (row + 0.5) - cv
                for col in range(c0, c1 + 1):
                    dx = (col + 0.5) - cu
                    if dx * dx + dy * dy <= r * r:
                        grid[row, col] = lab
    return grid_arr


def accumulate_votes(const double[::1] u, const double[::1] v, const long[:, ::1] grid, long[:, ::1] votes):
    """Add one vote per point landing on a pixel with label > 0 (in place)."""
    cdef Py_ssize_t n = u.shape[0], height = grid.shape[0], width = grid.shape[1]
    cdef Py_ssize_t i, row, col
    cdef long lab
    cdef double fu, fv
    with nogil:
        for i in range(n):
            if not (isfinite(u[i]) and isfinite(v[i])):
                continue
            fu = floor(u[i])
            fv = floor(v[i])
            if fu < 0.0 or fv < 0.0 or fu >= width or fv >= height:
                continue
            col = <Py_ssize_t>fu
            row = <Py_ssize_t>fv
            lab = grid[row, col]
            if lab > 0:
                votes[i, lab] += 1
