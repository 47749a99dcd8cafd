"""Per object-frame kinematic feature vectors (28 dims) and per-object standardization.

Dimension layout:

    0 speed            1 |accel|          2 angular velocity   3 residual mean
    4 rigid share      5 visibility       6-8 velocity         9-11 acceleration
    12 speed delta     13 share delta     14 EMA speed         15 EMA |accel|
    16 rotation angle  17 |translation|   18 residual std      19 |dA|_F (affine only)
    20 speed / p95     21 speed rank      22 is fastest        23 time fraction
    24 nearest dist    25 nearest delta   26 hand dist         27 hand delta

Derivatives at the first frame(s) are 0. Rank ties go to the smaller object id.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import geometry, motion
from .diagnostics import rollout
from .io import write_document
from .motion import SE3
from .scene import BACKGROUND, in_view

log = logging.getLogger(__name__)

N_DIMS = 28
EMA_ALPHA = 1.0 / 5.0
STD_EPS = 1e-8
P95_EPS = 1e-8


def centroid_track(x, o, k):
    """Centroid ``c[T, 3]``, velocity ``v`` and acceleration ``a`` of object ``k``.

    ``x`` is ``(T, N, 3)``; ``v[0] = 0`` and ``a[0] = a[1] = 0``.
    """
    idx = np.nonzero(np.asarray(o) == k)[0]
    if not len(idx):
        raise ValueError(f"object {k} has no points")
    c = x[:, idx].mean(axis=1)
    v = np.zeros_like(c)
    v[1:] = c[1:] - c[:-1]
    a = np.zeros_like(c)
    a[2:] = v[2:] - v[1:-1]
    return c, v, a


def _diff(s):
    d = np.zeros_like(s)
    d[1:] = s[1:] - s[:-1]
    return d


def _ema(s, alpha=EMA_ALPHA):
    out = np.empty_like(s)
    e = 0.0
    for f in range(len(s)):
        e = (1.0 - alpha) * e + alpha * s[f]
        out[f] = e
    return out


def _rotation_params(table, k, f):
    """Axis-angle and |dA|_F for object ``k`` at frame ``f`` (the latter 0 in SE3 mode)."""
    if table.mode == SE3:
        return table.params["omega"][k, f], 0.0
    M, _ = table.linear(k, f)
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return geometry.matrix_to_aa(R), float(np.linalg.norm(table.params["dA"][k, f]))


@dataclass
class KinematicContext:
    T: int
    ids: list
    centroid: dict
    velocity: dict
    accel: dict
    speed: dict
    p95: float
    res_mean: dict
    res_std: dict
    rho: dict
    visibility: dict
    omega: dict
    trans: dict
    dA_norm: dict
    hand_id: int | None = None


def build_context(state, scene, T, cam=None, hand_id=None, roll=None):
    """Gather every per-object track needed for the feature rows in one pass."""
    roll = rollout(state, scene, T) if roll is None else roll
    ids = [k for k in range(scene.K) if k != BACKGROUND and np.any(scene.o == k)]
    if hand_id is not None and hand_id not in ids:
        raise ValueError(f"hand object {hand_id} is not a foreground object")
    r = roll.r
    ctx = KinematicContext(T=T, ids=ids, centroid={}, velocity={}, accel={}, speed={}, p95=0.0, res_mean={},
                           res_std={}, rho={}, visibility={}, omega={}, trans={}, dA_norm={}, hand_id=hand_id)
    for k in ids:
        idx = scene.members(k)
        c, v, a = centroid_track(roll.x, scene.o, k)
        ctx.centroid[k], ctx.velocity[k], ctx.accel[k] = c, v, a
        ctx.speed[k] = np.linalg.norm(v, axis=1)
        rn = np.linalg.norm(r[:, idx], axis=-1)
        ctx.res_mean[k] = rn.mean(axis=1)
        ctx.res_std[k] = rn.std(axis=1)
        disp = np.linalg.norm(roll.x_obj[:, idx] - scene.x0[idx], axis=-1)
        ctx.rho[k] = (disp / (disp + rn + motion.geometry.EPS)).mean(axis=1)
        if cam is None:
            ctx.visibility[k] = np.ones(T)
        else:
            ctx.visibility[k] = np.array([in_view(cam, roll.x[f, idx]).mean() for f in range(T)])
        rp = [_rotation_params(state.table, k, f) for f in range(T)]
        ctx.omega[k] = np.array([p[0] for p in rp])
        ctx.dA_norm[k] = np.array([p[1] for p in rp])
        ctx.trans[k] = np.array([state.table.linear(k, f)[1] for f in range(T)])
    speeds = np.concatenate([ctx.speed[k] for k in ids]) if ids else np.zeros(1)
    ctx.p95 = float(np.percentile(speeds, 95))
    return ctx


def _nearest_distance(ctx, k):
    others = [j for j in ctx.ids if j != k]
    if not others:
        return np.zeros(ctx.T)
    d = np.stack([np.linalg.norm(ctx.centroid[k] - ctx.centroid[j], axis=1) for j in others])
    return d.min(axis=0)


def _rank(ctx, k, f):
    order = sorted(ctx.ids, key=lambda j: (-ctx.speed[j][f], j))
    pos = order.index(k)
    n = len(order)
    return (n - pos) / n, 1.0 if pos == 0 else 0.0


def feature_matrix(ctx, k):
    """All ``T`` raw 28-dim rows for object ``k``."""
    if k not in ctx.ids:
        raise ValueError(f"object {k} is not a foreground object with points")
    T = ctx.T
    F = np.zeros((T, N_DIMS))
    v, a = ctx.velocity[k], ctx.accel[k]
    speed = ctx.speed[k]
    amag = np.linalg.norm(a, axis=1)
    F[:, 0] = speed
    F[:, 1] = amag
    F[1:, 2] = np.linalg.norm(ctx.omega[k][1:] - ctx.omega[k][:-1], axis=1)
    F[:, 3] = ctx.res_mean[k]
    F[:, 4] = ctx.rho[k]
    F[:, 5] = ctx.visibility[k]
    F[:, 6:9] = v
    F[:, 9:12] = a
    F[:, 12] = _diff(speed)
    F[:, 13] = _diff(ctx.rho[k])
    F[:, 14] = _ema(speed)
    F[:, 15] = _ema(amag)
    F[:, 16] = np.linalg.norm(ctx.omega[k], axis=1)
    F[:, 17] = np.linalg.norm(ctx.trans[k], axis=1)
    F[:, 18] = ctx.res_std[k]
    F[:, 19] = ctx.dA_norm[k]
    F[:, 20] = speed / (ctx.p95 + P95_EPS)
    for f in range(T):
        F[f, 21], F[f, 22] = _rank(ctx, k, f)
    F[:, 23] = np.arange(T) / max(T - 1, 1)
    near = _nearest_distance(ctx, k)
    F[:, 24] = near
    F[:, 25] = _diff(near)
    if ctx.hand_id is not None and ctx.hand_id != k:
        hand = np.linalg.norm(ctx.centroid[k] - ctx.centroid[ctx.hand_id], axis=1)
        F[:, 26] = hand
        F[:, 27] = _diff(hand)
    return F


def kin_features(ctx, k, f):
    if not (isinstance(f, (int, np.integer)) and 0 <= f < ctx.T):
        raise ValueError(f"frame {f!r} out of range [0, {ctx.T - 1}]")
    return feature_matrix(ctx, k)[f]


def standardize(rows, frames=None, eps=STD_EPS):
    """Z-score each dimension with stats over ``frames`` (all rows by default); append a bias 1.

    Returns ``(standardized[T, 29], mu[28], sigma[28])``; sigma is the population std.
    """
    rows = np.asarray(rows, dtype=np.float64)
    ref = rows if frames is None else rows[list(frames)]
    if not len(ref):
        raise ValueError("standardize needs at least one reference row")
    mu = ref.mean(axis=0)
    sigma = ref.std(axis=0)
    # exactly constant dims: pin the mean so they standardize to exact zeros
    const = np.all(ref == ref[0], axis=0)
    mu[const] = ref[0, const]
    sigma[const] = 0.0
    z = (rows - mu) / (sigma + eps)
    return np.column_stack([z, np.ones(len(rows))]), mu, sigma


def destandardize(z, mu, sigma, eps=STD_EPS):
    """Inverse of ``standardize`` (drops the bias column if present)."""
    z = np.asarray(z)
    if z.shape[-1] == len(mu) + 1:
        z = z[..., :-1]
    return mu + (sigma + eps) * z


def feature_document(ctx, observed=None):
    """Per-object raw and standardized matrices plus stats; ``observed[k]`` lists frames used for stats."""
    objects = {}
    for k in ctx.ids:
        raw = feature_matrix(ctx, k)
        frames = None if observed is None else observed.get(k)
        std, mu, sigma = standardize(raw, frames or None)
        objects[str(k)] = {"raw": raw, "standardized": std, "mu": mu, "sigma": sigma,
                           "stat_frames": list(range(ctx.T)) if not frames else list(frames)}
    return {"T": ctx.T, "n_dims": N_DIMS, "p95_speed": ctx.p95, "hand_id": ctx.hand_id, "objects": objects}


def write_features(path, doc):
    return write_document(path, "features", doc)
