"""Multiview majority-vote assignment of points to object labels."""
import logging

import numpy as np

from . import kernels
from .scene import BACKGROUND, project

log = logging.getLogger(__name__)

MIN_VOTES = 3
MIN_CONSISTENCY = 0.6
MIN_OBJECT_SIZE = 20


def accumulate_votes(scene, masks, cams, positions=None):
    """Vote matrix ``V[N, K]`` from label grids keyed ``(frame, camera_id)``.

    Each (frame, camera) ray is one vote: a point projecting in bounds onto a
    pixel with label > 0 adds one to that label's column. ``positions`` maps a
    frame to the ``(N, 3)`` point positions at that frame; canonical positions
    are used when it is omitted.
    """
    if not masks:
        raise ValueError("need label grids for at least one frame")
    votes = np.zeros((scene.N, scene.K), dtype=np.int64)
    for (f, c), grid in sorted(masks.items()):
        cam = cams[c]
        if grid.shape != (cam.height, cam.width):
            raise ValueError(f"mask ({f}, {c}) is {grid.shape}, camera {c} is {(cam.height, cam.width)}")
        x = scene.x0 if positions is None else positions[f]
        u, v, depth, valid = project(cam, x)
        u = np.where(valid & (depth > 0), u, np.nan)
        kernels.accumulate_votes(u, v, grid, votes)
    return votes


def assign(V, min_votes=MIN_VOTES, min_consistency=MIN_CONSISTENCY):
    """Majority label per point, or background when the filters reject it.

    A point keeps ``argmax_{k>=1} V[i, k]`` (ties go to the smaller label) when
    its foreground votes total at least ``min_votes`` and the winning share is at
    least ``min_consistency``.
    """
    V = np.asarray(V)
    fg = V[:, 1:]
    total = fg.sum(axis=1)
    best = np.argmax(fg, axis=1)  # first maximum, i.e. smallest label on ties
    top = fg[np.arange(len(V)), best]
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(total > 0, top / np.maximum(total, 1), 0.0)
    return np.where((total >= min_votes) & (share >= min_consistency), best + 1, BACKGROUND).astype(np.int64)


def merge_small_objects(o, min_count=MIN_OBJECT_SIZE):
    """Send labels held by fewer than ``min_count`` points to background."""
    o = np.array(o, dtype=np.int64)
    for k in np.unique(o):
        if k != BACKGROUND and np.count_nonzero(o == k) < min_count:
            log.warning("object %d has fewer than %d points; merged into background", k, min_count)
            o[o == k] = BACKGROUND
    return o


def shuffle_labels(o, seed, K=None):
    """Apply a seeded random permutation of the foreground labels ``1..K-1``."""
    o = np.asarray(o, dtype=np.int64)
    K = int(o.max()) + 1 if K is None else K
    if K <= 2:
        return o.copy()
    perm = np.concatenate([[BACKGROUND], 1 + np.random.default_rng(seed).permutation(K - 1)])
    return perm[o]
