"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``KINEFIELD_PURE=1`` to
force the numpy fallback. ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _core_py

if os.environ.get("KINEFIELD_PURE"):
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _core_py

BACKEND = "compiled" if _impl is not _core_py else "python"


def matmul_bias(X, W, b=None, relu=False):
    """``X @ W + b`` with a batch-independent, deterministic summation order."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    if b is None:
        b = np.zeros(W.shape[1])
    return _impl.matmul_bias(X, W, np.ascontiguousarray(b, dtype=np.float64), bool(relu))


def splat_disks(u, v, radius, labels, width, height):
    """Label grid from disks painted in array order (last write wins)."""
    return _impl.splat_disks(
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(radius, dtype=np.float64),
        np.ascontiguousarray(labels, dtype=np.int64),
        int(width),
        int(height),
    )


def accumulate_votes(u, v, grid, votes):
    """Increment ``votes[i, grid[row, col]]`` for each in-bounds point on a label > 0."""
    grid = np.ascontiguousarray(grid, dtype=np.int64)
    if votes.dtype != np.int64 or not votes.flags.c_contiguous:
        raise TypeError("votes must be a C-contiguous int64 array")
    if grid.size and (grid.min() < 0 or grid.max() >= votes.shape[1]):
        raise ValueError(f"label grid values must lie in [0, {votes.shape[1] - 1}]")
    _impl.accumulate_votes(
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        grid,
        votes,
    )
    return votes
