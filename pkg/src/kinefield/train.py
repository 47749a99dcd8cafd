"""Adam optimizer, the two-phase training driver and checkpoint I/O."""
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np

from . import objective
from .deform import DeformNet
from .io import config_hash, read_document, write_csv, write_document
from .motion import AFFINE, INIT_STD, SE3, MotionTable
from .objective import AUX_TERMS, LossWeights, Schedule
from .scene import ConfigError

log = logging.getLogger(__name__)

HISTORY_COLUMNS = (["iteration", "phase", "total", "fit"] + list(AUX_TERMS)
                   + [f"gate_{k}" for k in AUX_TERMS] + ["rho"])


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    phase1_iters: int = 2000
    phase2_iters: int = 1500
    lr_deform: float = 5e-4
    lr_embed: float = 5e-4
    lr_motion_max: float = 1e-3
    lr_motion_min: float = 1e-5
    deform_decay: float = 1.0  # Phase-2 cosine floor for the deform/embedding rates, as a fraction
    motion_mode: str = SE3
    motion_init_std: float = INIT_STD
    static_ids: list = field(default_factory=lambda: [0])
    hinge: bool = True
    max_loss: float = 1e6
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: Schedule = field(default_factory=Schedule)

    def validate(self):
        errors = []
        if self.phase1_iters < 0 or self.phase2_iters < 0:
            errors.append("phase lengths must be >= 0")
        for name in ("lr_deform", "lr_embed", "lr_motion_max", "lr_motion_min"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.lr_motion_min > self.lr_motion_max:
            errors.append("lr_motion_min must not exceed lr_motion_max")
        if not 0.0 < self.deform_decay <= 1.0:
            errors.append("deform_decay must lie in (0, 1]")
        if self.motion_mode not in (SE3, AFFINE):
            errors.append(f"motion_mode must be {SE3!r} or {AFFINE!r}")
        errors += self.weights.validate() + self.schedule.validate()
        if errors:
            raise ConfigError(errors)
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError([f"unknown train config key {k!r}" for k in sorted(unknown)])
        try:
            w = LossWeights(**d.pop("weights", {}))
            s = Schedule(**d.pop("schedule", {}))
        except TypeError as e:
            raise ConfigError([str(e)]) from None
        return cls(weights=w, schedule=s, **d)


class Adam:
    """Adam over a dict of arrays; moments live in ``m`` and ``v``, step count in ``t``."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        """One update; ``lr`` is a float or a dict of per-array rates."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            rate = lr[k] if isinstance(lr, dict) else lr
            params[k] -= rate * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def to_dict(self):
        return {"m": self.m, "v": self.v, "t": self.t}

    @classmethod
    def from_dict(cls, d):
        opt = cls({})
        opt.m = {k: np.asarray(v, dtype=np.float64) for k, v in d["m"].items()}
        opt.v = {k: np.asarray(v, dtype=np.float64) for k, v in d["v"].items()}
        opt.t = int(d["t"])
        return opt


def cosine_lr(it, total, lr_max, lr_min):
    if total <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * min(it, total) / total))


@dataclass
class TrainState:
    net: DeformNet
    z: np.ndarray
    table: MotionTable
    rbar: np.ndarray
    m: np.ndarray
    opt_deform: Adam
    opt_motion: Adam
    rng: np.random.Generator
    iteration: int = 0
    phase1_done: int = 0
    phase2_done: int = 0
    seed: int = 0
    config_hash: str = ""

    @classmethod
    def create(cls, scene, T, cfg, seed):
        s_net, s_table, s_rng = np.random.SeedSequence(seed).spawn(3)
        net = DeformNet.create(s_net)
        table = MotionTable.create(scene.K, T, cfg.motion_mode, seed=s_table, std=cfg.motion_init_std)
        z = scene.z.copy()
        N = scene.N
        return cls(net=net, z=z, table=table, rbar=np.zeros(N), m=np.full(N, 0.5),
                   opt_deform=Adam({**net.params, "z": z}), opt_motion=Adam(table.params),
                   rng=np.random.default_rng(s_rng), seed=int(seed), config_hash=config_hash(cfg.to_dict()))

    def to_dict(self):
        return {
            "weights": self.net.params, "z": self.z,
            "table": {"mode": self.table.mode, "params": self.table.params},
            "ema": {"rbar": self.rbar, "m": self.m},
            "optimizer": {"deform": self.opt_deform.to_dict(), "motion": self.opt_motion.to_dict()},
            "rng_state": self.rng.bit_generator.state,
            "iteration": self.iteration, "phase1_done": self.phase1_done, "phase2_done": self.phase2_done,
            "seed": self.seed, "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda x: np.asarray(x, dtype=np.float64)  # noqa: E731
        rng = np.random.default_rng()
        st = dict(d["rng_state"])
        rng.bit_generator.state = st
        return cls(
            net=DeformNet({k: arr(v) for k, v in d["weights"].items()}),
            z=arr(d["z"]),
            table=MotionTable(d["table"]["mode"], {k: arr(v) for k, v in d["table"]["params"].items()}),
            rbar=arr(d["ema"]["rbar"]), m=arr(d["ema"]["m"]),
            opt_deform=Adam.from_dict(d["optimizer"]["deform"]), opt_motion=Adam.from_dict(d["optimizer"]["motion"]),
            rng=rng, iteration=int(d["iteration"]), phase1_done=int(d["phase1_done"]),
            phase2_done=int(d["phase2_done"]), seed=int(d["seed"]), config_hash=str(d["config_hash"]),
        )


def save_checkpoint(path, state):
    return write_document(path, "checkpoint", state.to_dict())


def load_checkpoint(path):
    return TrainState.from_dict(read_document(path, "checkpoint"))


def write_history(path, history):
    return write_csv(path, HISTORY_COLUMNS, [[row[c] for c in HISTORY_COLUMNS] for row in history])


def _step(state, scene, gt, cfg, phase, it2=0):
    T = gt.T
    # pair index in 0..T with reflecting ends, so frames 0 and T-1 sit in as many pairs as interior frames
    f = min(max(int(state.rng.integers(0, T + 1)), 1), T - 1)
    batch = objective.Batch(f=f, T=T, xobs_f=gt.xobs[f], xobs_p=gt.xobs[f - 1])
    if phase == 1:
        weights = LossWeights(**{**asdict(cfg.weights), **{k: 0.0 for k in AUX_TERMS}})
        gates = {k: 0.0 for k in AUX_TERMS}
    else:
        weights = cfg.weights
        gates = cfg.schedule.gates(it2)
    res = objective.evaluate(state.net, state.z, state.table, scene.x0, scene.o, batch, weights, gates,
                             m=state.m, static_ids=cfg.static_ids, hinge_enabled=cfg.hinge)
    if not np.isfinite(res.loss) or res.loss > cfg.max_loss:
        raise NumericalError(f"training diverged at iteration {state.iteration}: loss {res.loss!r}")

    g = res.grads
    params = state.net.params
    params["z"] = state.z
    decay = cosine_lr(it2, cfg.phase2_iters, 1.0, cfg.deform_decay) if phase == 2 else 1.0
    lrs = {k: cfg.lr_deform * decay for k in g["net"]}
    lrs["z"] = cfg.lr_embed * decay
    state.opt_deform.step(params, {**g["net"], "z": g["z"]}, lrs)
    del params["z"]
    if phase == 2:
        lr = cosine_lr(it2, cfg.phase2_iters, cfg.lr_motion_max, cfg.lr_motion_min)
        state.opt_motion.step(state.table.params, g["table"], lr)
        if cfg.schedule.residual_active(it2):
            state.rbar, state.m = objective.update_modulation(state.rbar, res.r_f, cfg.weights.eta)

    row = {"iteration": state.iteration, "phase": phase, "total": res.loss, "rho": res.rho}
    row.update(res.terms)
    row.update({f"gate_{k}": (gates[k] if phase == 2 else 0.0) for k in AUX_TERMS})
    state.iteration += 1
    return row


def train(scene, gt, cfg, state=None, seed=0, phases=(1, 2), callback=None):
    """Run the requested phases, resuming from ``state`` if given.

    Phase 1 fits the deformation network and embeddings to the observed
    positions; Phase 2 adds the motion table under the staged schedule.
    Returns ``(state, history)`` with one history row per iteration.
    """
    cfg.validate()
    if state is None:
        state = TrainState.create(scene, gt.T, cfg, seed)
    if state.table.K != scene.K or state.table.T != gt.T:
        raise ValueError("checkpoint motion table does not match the scene's K and T")
    history = []
    if 1 in phases:
        while state.phase1_done < cfg.phase1_iters:
            history.append(_step(state, scene, gt, cfg, 1))
            state.phase1_done += 1
            if callback:
                callback(state, history[-1])
    if 2 in phases:
        while state.phase2_done < cfg.phase2_iters:
            history.append(_step(state, scene, gt, cfg, 2, state.phase2_done))
            state.phase2_done += 1
            if callback:
                callback(state, history[-1])
    if history:
        log.info("trained to iteration %d, final loss %.3e", state.iteration, history[-1]["total"])
    return state, history
