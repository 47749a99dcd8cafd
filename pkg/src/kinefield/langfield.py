"""Kinematics-conditioned language embeddings per object and frame.

Each object gets a static anchor (normalized mean of its observed crop
embeddings) and a ridge map from standardized kinematic rows to the offsets of
its observations from that anchor. Predictions are blended with observations
where they exist and smoothed by a forward EMA, so every frame has an
embedding even when the object is hidden.
"""
from dataclasses import dataclass, field
import hashlib
import json
import logging
import re
from pathlib import Path

import numpy as np

from . import kinematics
from .io import read_document, write_document
from .scene import in_view, project

log = logging.getLogger(__name__)

DEFAULT_DIM = 64
RIDGE_LAMBDA = 0.01
BETA = 0.65
GAMMA = 0.15
W_STATIC = 0.35
W_TEMPORAL = 0.65
MIN_VISIBLE = 5
CROP_PERCENTILES = (2.0, 98.0)
CROP_MARGIN = 0.12
NORM_FLOOR = 1e-9


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < NORM_FLOOR):
        raise ValueError("cannot normalize a (near) zero vector")
    return v / n


# --- encoders ------------------------------------------------------------------

def _hash_seed(text):
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


class SyntheticEncoder:
    """Crops embed as ``normalize(u_k + mix * s_state + noise)``.

    ``states[k][f]`` names the state of object ``k`` at frame ``f``. A text query
    equal to a state name maps to that state's vector, ``"object k"`` maps to
    ``u_k``, and any other text to a hash-seeded random direction. ``noise`` is
    the expected norm of the additive noise vector.
    """

    kind = "synthetic"

    def __init__(self, states, dim=DEFAULT_DIM, seed=0, mix=0.6, noise=0.05):
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.states = [list(s) for s in states]
        self.dim, self.seed, self.mix, self.noise = int(dim), int(seed), float(mix), float(noise)

    def _direction(self, *key):
        return unit(np.random.default_rng([self.seed, *key]).normal(size=self.dim))

    def identity(self, k):
        return self._direction(0, k)

    def state_vector(self, name):
        return self._direction(1, _hash_seed(name.strip().lower()))

    def encode_crop(self, k, f, crop=None):
        v = self.identity(k) + self.mix * self.state_vector(self.states[k][f])
        if self.noise > 0:
            v = v + np.random.default_rng([self.seed, 2, k, f]).normal(0.0, self.noise / np.sqrt(self.dim), self.dim)
        return unit(v)

    def encode_text(self, query):
        q = query.strip().lower()
        m = re.fullmatch(r"object\s+(\d+)", q)
        if m:
            return self.identity(int(m.group(1)))
        if any(q == s.lower() for row in self.states for s in row):
            return self.state_vector(q)
        return self._direction(3, _hash_seed(q))

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "seed": self.seed, "mix": self.mix, "noise": self.noise,
                "states": self.states}


class FileEncoder:
    """Embeddings computed offline and stored as JSON.

    The file holds ``{"dim": D, "crops": {"k:f": [...]}, "texts": {query: [...]}}``.
    Missing crops count as unobserved.
    """

    kind = "file"

    def __init__(self, path):
        self.path = str(path)
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        self.dim = int(doc["dim"])
        self.crops = {}
        for key, vec in doc.get("crops", {}).items():
            k, f = key.split(":")
            self.crops[(int(k), int(f))] = self._check(vec, key)
        self.texts = {q.strip().lower(): self._check(v, q) for q, v in doc.get("texts", {}).items()}

    def _check(self, vec, name):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding {name!r} must be {self.dim} finite values")
        return unit(vec)

    def encode_crop(self, k, f, crop=None):
        return self.crops.get((k, f))

    def encode_text(self, query):
        try:
            return self.texts[query.strip().lower()]
        except KeyError:
            raise KeyError(f"query {query!r} has no stored text embedding") from None

    def to_dict(self):
        return {"type": self.kind, "dim": self.dim, "path": self.path}


def encoder_from_dict(d):
    if d["type"] == SyntheticEncoder.kind:
        return SyntheticEncoder(d["states"], d["dim"], d["seed"], d["mix"], d["noise"])
    if d["type"] == FileEncoder.kind:
        return FileEncoder(d["path"])
    raise ValueError(f"unknown encoder type {d['type']!r}")


# --- observations --------------------------------------------------------------

def crop_bbox(cam, x, min_visible=MIN_VISIBLE):
    """Box ``(u0, v0, u1, v1)`` around the 2nd-98th percentile of the in-bounds projections.

    Each side grows by 12% of the box extent and is clamped to the image.
    Returns ``None`` when fewer than ``min_visible`` points land in the image.
    """
    keep = in_view(cam, x)
    if np.count_nonzero(keep) < min_visible:
        return None
    u, v, _, _ = project(cam, x[keep])
    lo, hi = CROP_PERCENTILES
    u0, u1 = np.percentile(u, [lo, hi])
    v0, v1 = np.percentile(v, [lo, hi])
    mu, mv = CROP_MARGIN * (u1 - u0), CROP_MARGIN * (v1 - v0)
    return (float(max(0.0, u0 - mu)), float(max(0.0, v0 - mv)),
            float(min(cam.width, u1 + mu)), float(min(cam.height, v1 + mv)))


def observe(encoder, cam, x, o, ids, drop=None, min_visible=MIN_VISIBLE):
    """Crop embeddings ``{k: {f: e}}`` for every visible (object, frame); ``drop[k]`` hides frames."""
    drop = drop or {}
    out = {}
    for k in ids:
        idx = np.nonzero(o == k)[0]
        obs = {}
        for f in range(len(x)):
            if f in drop.get(k, ()):
                continue
            box = crop_bbox(cam, x[f, idx], min_visible)
            if box is None:
                continue
            e = encoder.encode_crop(k, f, box)
            if e is not None:
                obs[f] = e
        out[k] = obs
    return out


# --- field ---------------------------------------------------------------------

def static_embedding(e_obs):
    e_obs = np.asarray(e_obs, dtype=np.float64)
    if len(e_obs) == 0:
        raise ValueError("object was never observed")
    m = e_obs.mean(axis=0)
    if np.linalg.norm(m) < NORM_FLOOR:
        raise ValueError("observed embeddings cancel out (mean norm below 1e-9)")
    return m / np.linalg.norm(m)


def fit_ridge(F, dE, lam=RIDGE_LAMBDA):
    """``argmin_W ||F W - dE||^2 + lam ||W||^2`` via the regularized normal equations."""
    F = np.asarray(F, dtype=np.float64)
    dE = np.asarray(dE, dtype=np.float64)
    if F.ndim != 2 or dE.ndim != 2 or len(F) != len(dE) or len(F) == 0:
        raise ValueError("fit_ridge needs matching non-empty row counts")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(dE))):
        raise ValueError("fit_ridge inputs must be finite")
    A = F.T @ F + lam * np.eye(F.shape[1])
    return np.linalg.solve(A, F.T @ dE)


def ridge_objective(F, dE, W, lam=RIDGE_LAMBDA):
    return float(np.sum((F @ W - dE) ** 2) + lam * np.sum(W**2))


def predict_embedding(e_static, f_tilde, W):
    return unit(e_static + np.asarray(f_tilde) @ W)


def synchronize(e_hat, e_obs, beta=BETA, gamma=GAMMA):
    """Blend predictions with observations (``beta`` on the prediction), then forward EMA."""
    e_hat = np.asarray(e_hat, dtype=np.float64)
    pre = e_hat.copy()
    for f, e in e_obs.items():
        pre[f] = unit(beta * e_hat[f] + (1.0 - beta) * np.asarray(e))
    out = pre.copy()
    for f in range(1, len(out)):
        out[f] = unit((1.0 - gamma) * pre[f] + gamma * out[f - 1])
    return out


@dataclass
class ObjectField:
    e_static: np.ndarray
    W: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    e_hat: np.ndarray
    e_sync: np.ndarray
    observed: list


@dataclass
class EmbeddingField:
    objects: dict
    encoder: dict
    beta: float = BETA
    gamma: float = GAMMA
    lam: float = RIDGE_LAMBDA
    static_only: bool = False
    dropped: list = field(default_factory=list)

    @property
    def T(self):
        return len(next(iter(self.objects.values())).e_sync)


def fit_object(raw, obs, beta=BETA, gamma=GAMMA, lam=RIDGE_LAMBDA, static_only=False):
    """Field entry for one object from its raw ``(T, 28)`` features and ``{f: e_obs}``."""
    frames = sorted(obs)
    E = np.array([obs[f] for f in frames])
    e_static = static_embedding(E)
    Ft, mu, sigma = kinematics.standardize(raw, frames)
    T = len(raw)
    if static_only:
        W = np.zeros((Ft.shape[1], len(e_static)))
        e_hat = np.tile(e_static, (T, 1))
        e_sync = e_hat.copy()
    else:
        W = fit_ridge(Ft[frames], E - e_static, lam)
        e_hat = np.array([predict_embedding(e_static, Ft[f], W) for f in range(T)])
        e_sync = synchronize(e_hat, obs, beta, gamma)
    return ObjectField(e_static, W, mu, sigma, e_hat, e_sync, frames)


def fit_field(features, observations, encoder, beta=BETA, gamma=GAMMA, lam=RIDGE_LAMBDA, static_only=False):
    """Fit every object independently; objects never observed are dropped with a warning."""
    objects, dropped = {}, []
    for k in sorted(features):
        try:
            objects[k] = fit_object(features[k], observations.get(k, {}), beta, gamma, lam, static_only)
        except ValueError as e:
            log.warning("object %d dropped from the language field: %s", k, e)
            dropped.append(k)
    if not objects:
        raise ValueError("no object has usable observations")
    return EmbeddingField(objects, encoder.to_dict(), beta, gamma, lam, static_only, dropped)


def query_score(fld, q):
    """Per object ``(score, trace, argmax_frame)`` for a unit query embedding ``q``."""
    out = {}
    for k, ob in fld.objects.items():
        trace = ob.e_sync @ q
        f_best = int(np.argmax(trace))
        out[k] = (float(W_STATIC * (ob.e_static @ q) + W_TEMPORAL * trace[f_best]), trace, f_best)
    return out


def rank_objects(scores):
    return sorted(scores, key=lambda k: (-scores[k][0], k))


def field_to_dict(fld):
    return {
        "encoder": fld.encoder, "beta": fld.beta, "gamma": fld.gamma, "lambda": fld.lam,
        "static_only": fld.static_only, "dropped": fld.dropped,
        "objects": {str(k): {"e_static": ob.e_static, "W": ob.W, "mu": ob.mu, "sigma": ob.sigma,
                             "e_hat": ob.e_hat, "e_sync": ob.e_sync, "observed_frames": ob.observed}
                    for k, ob in fld.objects.items()},
    }


def field_from_dict(d):
    arr = lambda x: np.asarray(x, dtype=np.float64)  # noqa: E731
    objects = {int(k): ObjectField(arr(v["e_static"]), arr(v["W"]), arr(v["mu"]), arr(v["sigma"]), arr(v["e_hat"]),
                                   arr(v["e_sync"]), [int(f) for f in v["observed_frames"]])
               for k, v in d["objects"].items()}
    return EmbeddingField(objects, d["encoder"], float(d["beta"]), float(d["gamma"]), float(d["lambda"]),
                          bool(d["static_only"]), [int(k) for k in d["dropped"]])


def save_field(path, fld):
    return write_document(path, "language_field", field_to_dict(fld))


def load_field(path):
    return field_from_dict(read_document(path, "language_field"))
