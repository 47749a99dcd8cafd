"""Loss terms, residual-adaptive modulation and the staged activation schedule.

``evaluate`` computes the total objective for one consecutive frame pair and
its exact gradients with respect to the deformation weights, the per-point
embeddings and the motion table.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import deform, motion
from .motion import SE3

AUX_TERMS = ("res", "share", "vel", "smooth", "id")


@dataclass
class LossWeights:
    fit: float = 1.0
    res: float = 0.02
    share: float = 0.01
    vel: float = 0.01
    smooth: float = 0.01
    id: float = 0.001
    tau: float = 0.35
    eta: float = 0.95

    def validate(self):
        errors = [f"loss weight {k} must be >= 0" for k, v in asdict(self).items() if v < 0]
        if not 0.0 < self.tau < 1.0:
            errors.append("tau must lie in (0, 1)")
        if not 0.0 <= self.eta < 1.0:
            errors.append("eta must lie in [0, 1)")
        return errors


@dataclass
class Schedule:
    """Iteration thresholds (within the motion phase) for the auxiliary terms.

    Each auxiliary term is off before its start iteration. Once on, it is scaled
    by the shared warmup ramp, which rises linearly from 0 at ``warmup_start``
    to 1 at ``warmup_end``. ``scale`` stretches every threshold.
    """

    motion_start: int = 200
    vel_start: int = 300
    warmup_start: int = 500
    res_start: int = 600
    warmup_end: int = 1000
    scale: float = 1.0
    force_all: bool = False

    def validate(self):
        seq = [self.motion_start, self.vel_start, self.warmup_start, self.res_start, self.warmup_end]
        errors = []
        if any(b <= a for a, b in zip(seq, seq[1:])):
            errors.append("schedule thresholds must be strictly increasing")
        if self.scale <= 0:
            errors.append("schedule scale must be positive")
        return errors

    def _at(self, v):
        return v * self.scale

    def warmup(self, it):
        lo, hi = self._at(self.warmup_start), self._at(self.warmup_end)
        return float(min(1.0, max(0.0, (it - lo) / (hi - lo))))

    def gates(self, it):
        if self.force_all:
            return {k: 1.0 for k in AUX_TERMS}
        w = self.warmup(it)
        on = lambda start: w if it >= self._at(start) else 0.0  # noqa: E731
        return {
            "smooth": on(self.motion_start),
            "share": on(self.motion_start),
            "id": on(self.motion_start),
            "vel": on(self.vel_start),
            "res": on(self.res_start),
        }

    def residual_active(self, it):
        return self.force_all or it >= self._at(self.res_start)


# --- individual terms (values) -------------------------------------------------

def fidelity_loss(x, xobs):
    x = np.asarray(x)
    xobs = np.asarray(xobs)
    if x.shape != xobs.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {xobs.shape}")
    return float(np.mean(np.sum((x - xobs) ** 2, axis=-1)))


def update_modulation(rbar, r, eta=0.95):
    """EMA-update per-point residual magnitudes and return ``(rbar, m)``.

    ``m_i = sigmoid((r̄_i - mean r̄) / (std r̄ + 1e-6))``; callers treat ``m``
    as a constant (no gradient flows through it).
    """
    rbar = eta * np.asarray(rbar) + (1.0 - eta) * np.linalg.norm(r, axis=-1)
    return rbar, modulation_weights(rbar)


def modulation_weights(rbar):
    zs = (rbar - rbar.mean()) / (rbar.std() + 1e-6)
    return 1.0 / (1.0 + np.exp(-zs))


def modulated_residual_loss(r, m):
    return float(np.mean((1.0 - np.asarray(m)) * np.sum(np.asarray(r) ** 2, axis=-1)))


def share_hinge(rho, tau=0.35):
    return float(max(0.0, tau - rho) ** 2)


def share_hinge_grad(rho, tau=0.35):
    """d/dρ of the hinge; exactly zero whenever ρ >= τ."""
    return -2.0 * max(0.0, tau - rho)


def velocity_coherence(dx_t, dx_prev, xobj_t, xobj_prev):
    u = (np.asarray(dx_t) - dx_prev) - (np.asarray(xobj_t) - xobj_prev)
    return float(np.mean(np.sum(u**2, axis=-1)))


def _table_pairs(table):
    if table.mode == SE3:
        return table.params["omega"], table.params["trans"]
    return table.params["dA"].reshape(table.K, table.T, 9), table.params["b"]


def temporal_smooth(table, f):
    """Mean over objects of squared frame-to-frame change at frame ``f`` (0 at f = 0)."""
    if f == 0:
        return 0.0
    a, b = _table_pairs(table)
    return float(np.mean(np.sum((a[:, f] - a[:, f - 1]) ** 2, axis=-1) + np.sum((b[:, f] - b[:, f - 1]) ** 2, axis=-1)))


def identity_prior(table, static_ids):
    """Mean over (static object, frame) of the squared parameter magnitude."""
    ids = [k for k in static_ids if k < table.K]
    if not ids:
        return 0.0
    a, b = _table_pairs(table)
    return float(np.mean(np.sum(a[ids] ** 2, axis=-1) + np.sum(b[ids] ** 2, axis=-1)))


# --- total objective with gradients --------------------------------------------

@dataclass
class Batch:
    f: int
    T: int
    xobs_f: np.ndarray
    xobs_p: np.ndarray


@dataclass
class Result:
    loss: float
    terms: dict
    grads: dict = field(default_factory=dict)
    rho: float = 0.0
    r_f: np.ndarray | None = None


def evaluate(net, z, table, x0, o, batch, weights, gates, m=None, static_ids=(0,), hinge_enabled=True,
             need_grad=True):
    """Total loss on frames ``(f-1, f)`` and its gradients.

    Gradients come back under ``"net"`` (dict by weight name), ``"z"`` and
    ``"table"`` (dict by parameter name). A term contributes nothing, not even
    a zero, when its weight times gate is 0; that keeps motion-free runs
    bitwise equal to fit-only runs.
    """
    f, p = batch.f, batch.f - 1
    N = len(x0)
    denom = max(batch.T - 1, 1)
    dx, _, _, cache = deform.deform_rows(net, x0, z, [f / denom, p / denom])
    dx_f, dx_p = dx[:N], dx[N:]
    x_f, x_p = x0 + dx_f, x0 + dx_p

    fit = 0.5 * (fidelity_loss(x_f, batch.xobs_f) + fidelity_loss(x_p, batch.xobs_p))
    g_xf = (x_f - batch.xobs_f) * (weights.fit / N)
    g_xp = (x_p - batch.xobs_p) * (weights.fit / N)
    total = weights.fit * fit

    xt_f = motion.object_predict(table, x0, o, f)
    xt_p = motion.object_predict(table, x0, o, p)
    r_f = motion.residual(x_f, xt_f)
    r_p = motion.residual(x_p, xt_p)
    m = np.zeros(N) if m is None else m
    w = {k: getattr(weights, k) * gates.get(k, 0.0) for k in AUX_TERMS}
    if not hinge_enabled:
        w["share"] = 0.0

    terms = {
        "fit": fit,
        "res": 0.5 * (modulated_residual_loss(r_f, m) + modulated_residual_loss(r_p, m)),
        "vel": velocity_coherence(dx_f, dx_p, xt_f, xt_p),
        "smooth": temporal_smooth(table, f),
        "id": identity_prior(table, static_ids),
    }
    rho, grho_x, grho_xt = motion.rigid_share_grad(x0, xt_f, r_f)
    terms["share"] = share_hinge(rho, weights.tau)
    for k in AUX_TERMS:
        if w[k] > 0.0:
            total += w[k] * terms[k]

    result = Result(loss=float(total), terms=terms, rho=rho, r_f=r_f)
    if not need_grad:
        return result

    tgrads = {k: np.zeros_like(v) for k, v in table.params.items()}
    g_xtf = np.zeros_like(x0)
    g_xtp = np.zeros_like(x0)
    if w["res"] > 0.0:
        c = ((w["res"] / N) * (1.0 - m))[:, None]
        g_xf = g_xf + r_f * c
        g_xtf -= r_f * c
        g_xp = g_xp + r_p * c
        g_xtp -= r_p * c
    if w["share"] > 0.0:
        c = w["share"] * share_hinge_grad(rho, weights.tau)
        if c != 0.0:
            g_xf = g_xf + c * grho_x
            g_xtf += c * grho_xt
    if w["vel"] > 0.0:
        g = ((dx_f - dx_p) - (xt_f - xt_p)) * (2.0 * w["vel"] / N)
        g_xf = g_xf + g
        g_xp = g_xp - g
        g_xtf -= g
        g_xtp += g
    if w["smooth"] > 0.0 and f > 0:
        _smooth_grad(table, f, w["smooth"], tgrads)
    if w["id"] > 0.0:
        _identity_grad(table, static_ids, w["id"], tgrads)

    grads = deform.deform_backward(net, cache, np.concatenate([g_xf, g_xp]))
    gz = grads.pop("z")
    motion.object_predict_vjp(table, x0, o, f, g_xtf, tgrads)
    motion.object_predict_vjp(table, x0, o, p, g_xtp, tgrads)
    result.grads = {"net": grads, "z": gz, "table": tgrads}
    return result


def _smooth_grad(table, f, w, tgrads):
    c = 2.0 * w / table.K
    for name, val in table.params.items():
        d = c * (val[:, f] - val[:, f - 1])
        tgrads[name][:, f] += d
        tgrads[name][:, f - 1] -= d


def _identity_grad(table, static_ids, w, tgrads):
    ids = [k for k in static_ids if k < table.K]
    if not ids:
        return
    c = 2.0 * w / (len(ids) * table.T)
    for name, val in table.params.items():
        tgrads[name][ids] += c * val[ids]
