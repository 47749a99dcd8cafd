"""Pure numpy twins of the routines in ``_core.pyx``.

Operation order matches the compiled loops exactly, so outputs are bitwise
identical. These are several times slower; they exist for installs without a
C compiler and as a cross-check in the test suite.
"""
import numpy as np


def matmul_bias(X, W, b, relu=False):
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n, kin = X.shape
    if W.shape[0] != kin or b.shape[0] != W.shape[1]:
        raise ValueError(f"shape mismatch: X {n}x{kin}, W {W.shape[0]}x{W.shape[1]}, b {b.shape[0]}")
    out = np.empty((n, W.shape[1]), dtype=np.float64)
    out[:] = b
    for k in range(kin):
        out += X[:, k, None] * W[k]
    if relu:
        out[out < 0.0] = 0.0
    return out


def splat_disks(u, v, radius, labels, width, height):
    grid = np.zeros((height, width), dtype=np.int64)
    for cu, cv, r, lab in zip(u.tolist(), v.tolist(), radius.tolist(), labels.tolist()):
        if not (np.isfinite(cu) and np.isfinite(cv) and np.isfinite(r)) or r < 0.0:
            continue
        c0 = max(int(np.ceil(cu - r - 0.5)), 0)
        c1 = min(int(np.floor(cu + r - 0.5)), width - 1)
        r0 = max(int(np.ceil(cv - r - 0.5)), 0)
        r1 = min(int(np.floor(cv + r - 0.5)), height - 1)
        if c1 < c0 or r1 < r0:
            continue
        dx = (np.arange(c0, c1 + 1) + 0.5) - cu
        dy = (np.arange(r0, r1 + 1) + 0.5) - cv
        hit = dx[None, :] * dx[None, :] + dy[:, None] * dy[:, None] <= r * r
        grid[r0:r1 + 1, c0:c1 + 1][hit] = lab
    return grid


def accumulate_votes(u, v, grid, votes):
    height, width = grid.shape
    ok = np.isfinite(u) & np.isfinite(v)
    fu = np.floor(np.where(ok, u, -1.0))
    fv = np.floor(np.where(ok, v, -1.0))
    ok &= (fu >= 0.0) & (fv >= 0.0) & (fu < width) & (fv < height)
    idx = np.nonzero(ok)[0]
    labs = grid[fv[idx].astype(np.int64), fu[idx].astype(np.int64)]
    hit = labs > 0
    np.add.at(votes, (idx[hit], labs[hit]), 1)
