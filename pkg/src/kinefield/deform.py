"""Time-conditioned deformation network and the deformed point state.

The network maps ``[x0; z; posenc(t)]`` (48 values) through three rectified
hidden layers of width 128 to 9 raw outputs, scaled into position, rotation
and log-scale deltas. Its last layer starts at zero, so an untrained network is
the identity deformation.
"""
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .scene import EMBED_DIM

HIDDEN = 128
IN_DIM = 3 + EMBED_DIM + geometry.TIME_ENC_DIM
OUT_DIM = 9
OUT_SCALE = np.array([0.10] * 3 + [0.10] * 3 + [0.05] * 3)
LAYER_SHAPES = [(IN_DIM, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, HIDDEN), (HIDDEN, OUT_DIM)]
PARAM_NAMES = [f"{p}{i}" for i in range(1, 5) for p in ("W", "b")]
N_PARAMS = sum(a * b + b for a, b in LAYER_SHAPES)


class DeformNet:
    """Weights ``W1..W4``, ``b1..b4`` in a plain dict (``net.params``)."""

    def __init__(self, params):
        self.params = params

    @classmethod
    def create(cls, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for i, (fan_in, fan_out) in enumerate(LAYER_SHAPES, start=1):
            if i < len(LAYER_SHAPES):
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                params[f"W{i}"] = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            else:
                params[f"W{i}"] = np.zeros((fan_in, fan_out))
            params[f"b{i}"] = np.zeros(fan_out)
        return cls(params)

    def n_params(self):
        return sum(v.size for v in self.params.values())

    def copy(self):
        return DeformNet({k: v.copy() for k, v in self.params.items()})


@dataclass
class DeformedState:
    x: np.ndarray
    q: np.ndarray
    s: np.ndarray
    dx: np.ndarray
    dw: np.ndarray
    dl: np.ndarray


@dataclass
class ForwardCache:
    inputs: np.ndarray
    hidden: list
    n_points: int


def build_inputs(x0, z, times):
    """Stack ``[x0; z; posenc(t)]`` for every time in ``times`` (frame-major rows)."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    n = len(x0)
    enc = geometry.posenc(times)
    rows = np.empty((len(times) * n, IN_DIM))
    for j in range(len(times)):
        rows[j * n:(j + 1) * n, :3] = x0
        rows[j * n:(j + 1) * n, 3:3 + EMBED_DIM] = z
        rows[j * n:(j + 1) * n, 3 + EMBED_DIM:] = enc[j]
    return rows


def mlp_forward(params, X):
    hidden = []
    h = X
    for i in range(1, 4):
        h = kernels.matmul_bias(h, params[f"W{i}"], params[f"b{i}"], relu=True)
        hidden.append(h)
    out = kernels.matmul_bias(h, params["W4"], params["b4"])
    return out, hidden


def deform_rows(net, x0, z, times):
    """Raw deltas for every (time, point) row; returns ``(dx, dw, dl, cache)``."""
    X = build_inputs(x0, z, times)
    out, hidden = mlp_forward(net.params, X)
    d = out * OUT_SCALE
    return d[:, 0:3], d[:, 3:6], d[:, 6:9], ForwardCache(X, hidden, len(x0))


def deformed_state(scene, dx, dw, dl):
    x = scene.x0 + dx
    q = geometry.quat_compose(geometry.aa_to_quat(dw), scene.q0)
    s = np.exp(scene.s0 + dl)
    return DeformedState(x=x, q=q, s=s, dx=dx, dw=dw, dl=dl)


def deform_forward(net, scene, t, z=None):
    """Deformed positions, rotations and scales of every point at normalized time ``t``."""
    dx, dw, dl, cache = deform_rows(net, scene.x0, scene.z if z is None else z, [t])
    return deformed_state(scene, dx, dw, dl), cache


def deform_backward(net, cache, gdx, gdw=None, gdl=None):
    """Reverse pass: gradients on the weights and on ``z`` from upstream delta gradients.

    ``gdx`` (and optionally ``gdw``, ``gdl``) are ``(rows, 3)`` gradients of a
    scalar loss w.r.t. the scaled deltas. ``z`` gradients sum over the stacked
    time rows of each point.
    """
    if cache is None:
        raise ValueError("deform_backward needs the cache from a forward pass")
    n_rows = len(cache.inputs)
    g = np.zeros((n_rows, OUT_DIM))
    g[:, 0:3] = gdx
    if gdw is not None:
        g[:, 3:6] = gdw
    if gdl is not None:
        g[:, 6:9] = gdl
    g *= OUT_SCALE
    p = net.params
    grads = {}
    ones = np.ones((1, n_rows))
    acts = [cache.inputs] + cache.hidden
    for i in range(4, 0, -1):
        a = acts[i - 1]
        grads[f"W{i}"] = kernels.matmul_bias(a.T, g)
        grads[f"b{i}"] = kernels.matmul_bias(ones, g)[0]
        g = kernels.matmul_bias(g, p[f"W{i}"].T)
        if i > 1:
            g *= a > 0.0
    gz = g[:, 3:3 + EMBED_DIM].reshape(-1, cache.n_points, EMBED_DIM)
    out = gz[0].copy()
    for j in range(1, len(gz)):
        out += gz[j]
    grads["z"] = out
    return grads
