"""Read-only checks on a trained model: residual mean, rigid share, motion variance, shuffle test."""
from dataclasses import dataclass
import logging

import numpy as np

from . import deform, motion
from .assignment import shuffle_labels
from .io import write_document

log = logging.getLogger(__name__)

N_SHUFFLES = 5


@dataclass
class Rollout:
    """Deformed positions ``x`` and object predictions ``x_obj``, both ``(T, N, 3)``."""

    x: np.ndarray
    x_obj: np.ndarray

    @property
    def r(self):
        return self.x - self.x_obj


def rollout(state, scene, T, o=None):
    o = scene.o if o is None else o
    times = np.arange(T) / max(T - 1, 1)
    dx = deform.deform_rows(state.net, scene.x0, state.z, times)[0].reshape(T, scene.N, 3)
    x = scene.x0 + dx
    x_obj = np.stack([motion.object_predict(state.table, scene.x0, o, f) for f in range(T)])
    return Rollout(x, x_obj)


def residual_mean(r, o, k, frames=None):
    """Mean over frames of the mean residual norm over the points of object ``k``.

    ``r`` is ``(T, N, 3)``; ``frames`` restricts to the frames where ``k`` is visible.
    """
    idx = np.nonzero(np.asarray(o) == k)[0]
    if not len(idx):
        raise ValueError(f"object {k} has no points")
    frames = range(len(r)) if frames is None else list(frames)
    if not len(frames):
        raise ValueError(f"object {k} has no visible frames")
    return float(np.mean([np.linalg.norm(r[f, idx], axis=-1).mean() for f in frames]))


def motion_variance(x0, x_f, o, k):
    """Spread of object ``k``'s displacement vectors about their mean at one frame."""
    idx = np.nonzero(np.asarray(o) == k)[0]
    if not len(idx):
        raise ValueError(f"object {k} has no points")
    d = x_f[idx] - x0[idx]
    return float(np.mean(np.sum((d - d.mean(axis=0)) ** 2, axis=-1)))


def residual_energy(x, x_obj):
    """Total squared residual over every point and frame."""
    return float(np.sum((x - x_obj) ** 2))


def shuffle_test(state, scene, T, seed=0, n=N_SHUFFLES, roll=None):
    """Ratio of mean residual energy under permuted labels to the original energy.

    Returns ``None`` when fewer than two foreground labels exist, since only the
    identity permutation is then available.
    """
    if scene.K < 3:
        log.warning("shuffle test needs at least two foreground objects; not applicable")
        return None
    roll = rollout(state, scene, T) if roll is None else roll
    base = residual_energy(roll.x, roll.x_obj)
    shuffled = []
    for j in range(n):
        o = shuffle_labels(scene.o, seed + j, scene.K)
        x_obj = np.stack([motion.object_predict(state.table, scene.x0, o, f) for f in range(T)])
        shuffled.append(residual_energy(roll.x, x_obj))
    if base == 0.0:
        return float("inf") if np.mean(shuffled) > 0 else 1.0
    return float(np.mean(shuffled) / base)


def global_rho(x0, roll):
    return float(np.mean([motion.rigid_share(x0, roll.x_obj[f], roll.r[f]) for f in range(len(roll.x))]))


def report(state, scene, T, seed=0, visible=None):
    """Diagnostics document: per-object residual mean, rigid share and variance summary."""
    roll = rollout(state, scene, T)
    r = roll.r
    objects = []
    for k in range(scene.K):
        if not np.any(scene.o == k):
            continue
        frames = None if visible is None else [f for f in range(T) if visible[k][f]]
        rho_k = [motion.rigid_share_per_object(scene.x0, roll.x_obj[f], r[f], scene.o, scene.K)[k] for f in range(T)]
        var = [motion_variance(scene.x0, roll.x[f], scene.o, k) for f in range(T)]
        objects.append({
            "id": k,
            "n_points": int(np.count_nonzero(scene.o == k)),
            "residual_mean": residual_mean(r, scene.o, k, frames) if frames is None or frames else None,
            "rho": float(np.mean(rho_k)),
            "motion_variance": {"mean": float(np.mean(var)), "max": float(np.max(var)), "per_frame": var},
        })
    return {
        "objects": objects,
        "global_rho": global_rho(scene.x0, roll),
        "residual_energy": residual_energy(roll.x, roll.x_obj),
        "shuffle_ratio": shuffle_test(state, scene, T, seed=seed, roll=roll),
        "shuffle_seeds": [seed + j for j in range(N_SHUFFLES)],
    }


def write_report(path, doc):
    return write_document(path, "diagnostics", doc)
