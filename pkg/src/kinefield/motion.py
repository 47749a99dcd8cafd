"""Shared per-object motion table, implicit residuals and the rigid-share ratio."""
from dataclasses import dataclass

import numpy as np

from . import geometry

SE3 = "SE3"
AFFINE = "AFFINE"
INIT_STD = 1e-4


@dataclass
class MotionTable:
    """Per-object, per-frame transform parameters.

    ``params`` holds ``omega``/``trans`` (``K×T×3``) in SE3 mode, or
    ``dA`` (``K×T×3×3``) and ``b`` (``K×T×3``) in AFFINE mode.
    """

    mode: str
    params: dict

    @classmethod
    def create(cls, K, T, mode=SE3, seed=0, std=INIT_STD):
        rng = np.random.default_rng(seed)
        if mode == SE3:
            params = {"omega": rng.normal(0.0, std, (K, T, 3)), "trans": rng.normal(0.0, std, (K, T, 3))}
        elif mode == AFFINE:
            params = {"dA": rng.normal(0.0, std, (K, T, 3, 3)), "b": rng.normal(0.0, std, (K, T, 3))}
        else:
            raise ValueError(f"unknown motion mode {mode!r}")
        return cls(mode, params)

    @property
    def K(self):
        return next(iter(self.params.values())).shape[0]

    @property
    def T(self):
        return next(iter(self.params.values())).shape[1]

    def copy(self):
        return MotionTable(self.mode, {k: v.copy() for k, v in self.params.items()})

    def linear(self, k, f):
        """The ``(M, t)`` pair such that ``x̃ = M @ x0 + t`` for object ``k`` at frame ``f``."""
        self._check_frame(f)
        if self.mode == SE3:
            return geometry.rodrigues(self.params["omega"][k, f]), self.params["trans"][k, f]
        return np.eye(3) + self.params["dA"][k, f], self.params["b"][k, f]

    def _check_frame(self, f):
        if not (isinstance(f, (int, np.integer)) and 0 <= f < self.T):
            raise ValueError(f"frame index must be an integer in [0, {self.T - 1}] (no interpolation), got {f!r}")


def object_predict(table, x0, o, f):
    """Object-predicted positions ``x̃_i = M_{o(i)}(f) x0_i + t_{o(i)}(f)``."""
    out = np.empty_like(x0)
    for k in range(table.K):
        idx = np.nonzero(o == k)[0]
        if len(idx):
            M, t = table.linear(k, f)
            out[idx] = x0[idx] @ M.T + t
    return out


def object_predict_vjp(table, x0, o, f, g, grads):
    """Accumulate ``∂(Σ g·x̃)/∂params`` for frame ``f`` into ``grads`` (same keys as params)."""
    for k in range(table.K):
        idx = np.nonzero(o == k)[0]
        if not len(idx):
            continue
        gk = g[idx]
        v = x0[idx]
        if table.mode == SE3:
            grads["trans"][k, f] += gk.sum(axis=0)
            grads["omega"][k, f] += geometry.rodrigues_vjp(table.params["omega"][k, f], v, gk)
        else:
            grads["b"][k, f] += gk.sum(axis=0)
            grads["dA"][k, f] += gk.T @ v
    return grads


def residual(x, x_obj):
    x = np.asarray(x)
    x_obj = np.asarray(x_obj)
    if x.shape != x_obj.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_obj.shape}")
    return x - x_obj


def _share_terms(x0, x_obj, r, eps):
    a = np.linalg.norm(x_obj - x0, axis=-1)
    b = np.linalg.norm(r, axis=-1)
    return a, b, a / (a + b + eps)


def rigid_share(x0, x_obj, r, eps=1e-8):
    """Mean fraction of each point's displacement carried by its object transform.

    A fully static point contributes ``0 / ε = 0``, so a motionless scene has ρ = 0.
    """
    return float(np.mean(_share_terms(x0, x_obj, r, eps)[2]))


def rigid_share_per_object(x0, x_obj, r, o, K, eps=1e-8):
    frac = _share_terms(x0, x_obj, r, eps)[2]
    return np.array([frac[o == k].mean() if np.any(o == k) else 0.0 for k in range(K)])


def rigid_share_grad(x0, x_obj, r, eps=1e-8):
    """Return ``(ρ, ∂ρ/∂x, ∂ρ/∂x̃)`` where ``r = x - x̃``.

    Points with a zero-length displacement or residual take a zero subgradient.
    """
    d = x_obj - x0
    a, b, frac = _share_terms(x0, x_obj, r, eps)
    n = len(a)
    den = (a + b + eps) ** 2
    da = (b + eps) / den / n
    db = -a / den / n
    with np.errstate(invalid="ignore", divide="ignore"):
        ua = np.where(a[:, None] > 0, d / a[:, None], 0.0)
        ub = np.where(b[:, None] > 0, r / b[:, None], 0.0)
    g_x = db[:, None] * ub
    g_xobj = da[:, None] * ua - db[:, None] * ub
    return float(np.mean(frac)), g_x, g_xobj
