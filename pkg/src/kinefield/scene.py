"""Gaussian scene data model, synthetic ground truth, cameras and label masks.

The synthetic generator stands in for photometric supervision: each point gets
observed positions ``R*(f) x0 + t*(f) + r*(f) + noise`` so recovered object
transforms can be checked against the truth.
"""
from dataclasses import asdict, dataclass, field
import logging

import numpy as np

from . import geometry, kernels
from .io import read_document, write_document

log = logging.getLogger(__name__)

EMBED_DIM = 32
INIT_SCALE = 0.02
INIT_OPACITY = 0.1
BACKGROUND = 0


class ConfigError(ValueError):
    """Raised with every validation problem listed in ``errors``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class GaussianScene:
    x0: np.ndarray
    q0: np.ndarray
    s0: np.ndarray
    opacity_logit: np.ndarray
    color: np.ndarray
    z: np.ndarray
    o: np.ndarray
    K: int

    @property
    def N(self):
        return len(self.x0)

    def members(self, k):
        return np.nonzero(self.o == k)[0]

    def extent(self):
        """Diagonal of the axis-aligned box around the canonical positions."""
        return float(np.linalg.norm(self.x0.max(axis=0) - self.x0.min(axis=0)))

    def copy(self):
        return GaussianScene(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})


@dataclass
class GroundTruth:
    T: int
    rotations: np.ndarray  # (K, T, 3) axis-angle
    translations: np.ndarray  # (K, T, 3)
    residuals: np.ndarray  # (N, T, 3)
    xobs: np.ndarray  # (T, N, 3)
    labels: np.ndarray  # generating object per point
    noise_std: float
    states: list  # states[k][f] -> str
    hand_id: int | None = None

    def transform(self, k, f):
        return geometry.rodrigues(self.rotations[k, f]), self.translations[k, f]

    def positions(self, x0, f):
        """Noise-free positions at frame ``f``."""
        out = np.empty_like(x0)
        for k in range(len(self.rotations)):
            idx = np.nonzero(self.labels == k)[0]
            R, t = self.transform(k, f)
            out[idx] = x0[idx] @ R.T + t
        return out + self.residuals[:, f]


@dataclass
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    focal: float
    width: int
    height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if np.allclose(self.position, self.look_at):
            raise ValueError("camera look_at must differ from position")
        if self.width < 16 or self.height < 16:
            raise ValueError("camera image must be at least 16x16")

    def basis(self):
        """Rows are the camera right, down and forward axes in world coordinates."""
        fwd = geometry.normalize(self.look_at - self.position, eps=0.0)
        right = np.cross(fwd, self.up)
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        return np.stack([right, down, fwd])

    def to_dict(self):
        return {
            "position": self.position, "look_at": self.look_at, "up": self.up,
            "focal": self.focal, "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["position"], d["look_at"], d["up"], float(d["focal"]), int(d["width"]), int(d["height"]))


def project(cam, x):
    """Pinhole projection of ``(n, 3)`` points.

    Returns ``(u, v, depth, valid)``; depth is the signed distance along the view
    axis and points at the camera center are flagged invalid (u, v are NaN).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    pc = (x - cam.position) @ cam.basis().T
    depth = pc[:, 2]
    valid = np.abs(depth) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(valid, cam.width / 2.0 + cam.focal * pc[:, 0] / depth, np.nan)
        v = np.where(valid, cam.height / 2.0 + cam.focal * pc[:, 1] / depth, np.nan)
    return u, v, depth, valid


def unproject(cam, u, v, depth):
    u, v, depth = (np.asarray(a, dtype=np.float64) for a in (u, v, depth))
    pc = np.stack([(u - cam.width / 2.0) * depth / cam.focal, (v - cam.height / 2.0) * depth / cam.focal, depth], axis=-1)
    return pc @ cam.basis() + cam.position


def in_view(cam, x):
    u, v, depth, valid = project(cam, x)
    ok = valid & (depth > 0)
    with np.errstate(invalid="ignore"):
        ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return ok


def render_labels(cam, positions, labels, log_scales, radius_scale=3.0):
    """Painter-order disk splatting of labelled points; returns an ``(H, W)`` grid.

    Disk radius is ``radius_scale · exp(mean log-scale) · focal / depth``. Points
    are painted far to near so the nearest covering point wins.
    """
    positions = np.atleast_2d(positions)
    if len(positions) == 0:
        return np.zeros((cam.height, cam.width), dtype=np.int64)
    u, v, depth, valid = project(cam, positions)
    front = valid & (depth > 0)
    idx = np.nonzero(front)[0]
    # stable sort: equal depths keep index order, so the higher index paints last
    order = idx[np.argsort(-depth[idx], kind="stable")]
    radius = radius_scale * np.exp(np.mean(log_scales, axis=1)) * cam.focal / np.where(front, depth, 1.0)
    return kernels.splat_disks(u[order], v[order], radius[order], np.asarray(labels)[order], cam.width, cam.height)


def render_masks(scene, gt, cam, frame, radius_scale=3.0):
    """Ground-truth instance labels for one frame and camera (0 = uncovered/background)."""
    return render_labels(cam, gt.positions(scene.x0, frame), gt.labels, scene.s0, radius_scale)


def kabsch(A, B):
    """Least-squares rigid ``(R, t)`` with ``R @ a + t ≈ b`` for paired rows."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    H = (A - ca).T @ (B - cb)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cb - R @ ca


def init_scene(points, colors, seed):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("init_scene needs at least one point")
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(colors) != len(points):
        raise ValueError("points and colors differ in length")
    n = len(points)
    rng = np.random.default_rng(seed)
    return GaussianScene(
        x0=points.copy(),
        q0=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        s0=np.full((n, 3), np.log(INIT_SCALE)),
        opacity_logit=np.full(n, np.log(INIT_OPACITY / (1.0 - INIT_OPACITY))),
        color=colors.copy(),
        z=rng.normal(0.0, 0.01, size=(n, EMBED_DIM)),
        o=np.zeros(n, dtype=np.int64),
        K=1,
    )


# --- synthetic generator -------------------------------------------------------

@dataclass
class Keyframe:
    frame: int
    rotation: tuple = (0.0, 0.0, 0.0)  # axis-angle about the object's own center
    translation: tuple = (0.0, 0.0, 0.0)  # displacement of the center
    state: str | None = None  # label for the segment that ends at the next keyframe


@dataclass
class ObjectSpec:
    n_points: int = 100
    center: tuple | None = None
    radius: float = 0.3
    keyframes: list = field(default_factory=list)
    residual_amplitude: float = 0.0
    residual_frequency: float = 1.0
    static: bool = False


@dataclass
class SceneConfig:
    T: int = 30
    objects: list = field(default_factory=lambda: [ObjectSpec(), ObjectSpec()])
    n_background: int = 0
    noise_std: float = 0.0
    spacing: float = 1.0
    n_cameras: int = 3
    image_width: int = 96
    image_height: int = 72
    mask_radius_scale: float = 3.0
    label_dropout: float = 0.0
    hand_id: int | None = None

    @property
    def K(self):
        return len(self.objects) + 1

    @property
    def static_ids(self):
        """Background plus every object flagged ``static``."""
        return [0] + [j for j, spec in enumerate(self.objects, start=1) if spec.static]

    @property
    def all_static(self):
        return all(spec.static for spec in self.objects)

    def validate(self):
        errors = []
        if self.K < 2:
            errors.append("need at least one foreground object (K >= 2)")
        if self.T < 3:
            errors.append(f"T must be >= 3, got {self.T}")
        if self.noise_std < 0:
            errors.append("noise_std must be >= 0")
        if self.n_background < 0:
            errors.append("n_background must be >= 0")
        if not 0.0 <= self.label_dropout < 1.0:
            errors.append("label_dropout must lie in [0, 1)")
        if self.n_cameras < 1:
            errors.append("n_cameras must be >= 1")
        if self.image_width < 16 or self.image_height < 16:
            errors.append("image must be at least 16x16")
        if self.hand_id is not None and not 1 <= self.hand_id < self.K:
            errors.append(f"hand_id must be a foreground object id in [1, {self.K - 1}]")
        for j, spec in enumerate(self.objects, start=1):
            if spec.n_points < 10:
                errors.append(f"object {j}: n_points must be >= 10")
            if spec.radius <= 0:
                errors.append(f"object {j}: radius must be positive")
            if spec.residual_amplitude < 0:
                errors.append(f"object {j}: residual_amplitude must be >= 0")
            frames = [kf.frame for kf in spec.keyframes]
            if frames != sorted(set(frames)):
                errors.append(f"object {j}: keyframe frames must be strictly increasing")
            if any(f < 0 or f >= self.T for f in frames):
                errors.append(f"object {j}: keyframe frames must lie in [0, {self.T - 1}]")
            if spec.static and (spec.residual_amplitude > 0 or any(
                    any(kf.rotation) or any(kf.translation) for kf in spec.keyframes)):
                errors.append(f"object {j}: a static object cannot carry motion or residual")
        if errors:
            raise ConfigError(errors)
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        objs = []
        for o in d.pop("objects", []):
            o = dict(o)
            kfs = [Keyframe(**{k: tuple(v) if isinstance(v, list) else v for k, v in kf.items()})
                   for kf in o.pop("keyframes", [])]
            if o.get("center") is not None:
                o["center"] = tuple(o["center"])
            objs.append(ObjectSpec(keyframes=kfs, **o))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError([f"unknown scene config key {k!r}" for k in sorted(unknown)])
        return cls(objects=objs, **d)


def _interp_keyframes(keyframes, T):
    rot = np.zeros((T, 3))
    trans = np.zeros((T, 3))
    if not keyframes:
        return rot, trans
    frames = np.array([kf.frame for kf in keyframes], dtype=np.float64)
    R = np.array([kf.rotation for kf in keyframes], dtype=np.float64)
    D = np.array([kf.translation for kf in keyframes], dtype=np.float64)
    f = np.arange(T, dtype=np.float64)
    for a in range(3):
        rot[:, a] = np.interp(f, frames, R[:, a])
        trans[:, a] = np.interp(f, frames, D[:, a])
    return rot, trans


def _segment_state(a, b):
    moved = not np.allclose(a.translation, b.translation)
    turned = not np.allclose(a.rotation, b.rotation)
    if moved and turned:
        return "tumbling"
    if moved:
        return "sliding"
    if turned:
        return "spinning"
    return "resting"


def _states(keyframes, T):
    """Per-frame state label; frame f is labelled by the motion from f-1 to f."""
    out = ["resting"] * T
    for a, b in zip(keyframes, keyframes[1:]):
        label = a.state or _segment_state(a, b)
        for f in range(a.frame + 1, b.frame + 1):
            out[f] = label
    if keyframes and keyframes[0].state:
        for f in range(0, keyframes[0].frame + 1):
            out[f] = keyframes[0].state
    return out


def _ball(rng, n, radius):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.random(n)[:, None] ** (1.0 / 3.0)


def default_cameras(cfg, x0):
    center = x0.mean(axis=0)
    r = max(float(np.max(np.linalg.norm(x0 - center, axis=1))), 1e-3)
    dist = 3.0 * r
    cams = []
    for c in range(cfg.n_cameras):
        az = 2.0 * np.pi * c / cfg.n_cameras + np.pi / 7.0
        el = np.deg2rad(35.0)
        pos = center + dist * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        # leave ~15% margin around the scene's bounding sphere
        focal = 0.85 * 0.5 * min(cfg.image_width, cfg.image_height) * np.sqrt(dist**2 - r**2) / r
        cams.append(Camera(pos, center, np.array([0.0, 0.0, 1.0]), float(focal), cfg.image_width, cfg.image_height))
    return cams


def generate_synthetic(cfg, seed):
    """Build a scene and its ground truth from a config; deterministic per seed.

    Foreground objects are disjoint balls (index ``k >= 1``); optional background
    points (label 0) lie on a static floor below them.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    K, T = cfg.K, cfg.T
    n_fg = len(cfg.objects)

    centers = []
    for j, spec in enumerate(cfg.objects):
        if spec.center is not None:
            centers.append(np.asarray(spec.center, dtype=np.float64))
        else:
            ang = 2.0 * np.pi * j / max(n_fg, 1)
            rad = cfg.spacing if n_fg > 1 else 0.0
            centers.append(np.array([rad * np.cos(ang), rad * np.sin(ang), 0.0]))
    for a in range(n_fg):
        for b in range(a + 1, n_fg):
            gap = np.linalg.norm(centers[a] - centers[b])
            if gap <= cfg.objects[a].radius + cfg.objects[b].radius:
                raise ConfigError([f"objects {a + 1} and {b + 1} overlap in the canonical frame"])

    pts, cols, labels = [], [], []
    palette = rng.random((K, 3))
    for j, spec in enumerate(cfg.objects, start=1):
        pts.append(centers[j - 1] + _ball(rng, spec.n_points, spec.radius))
        cols.append(np.clip(palette[j] + 0.05 * rng.normal(size=(spec.n_points, 3)), 0.0, 1.0))
        labels.append(np.full(spec.n_points, j))
    if cfg.n_background:
        allc = np.array(centers)
        lo = allc.min(axis=0) - 1.5 * max(s.radius for s in cfg.objects)
        hi = allc.max(axis=0) + 1.5 * max(s.radius for s in cfg.objects)
        floor_z = lo[2] - 0.25
        bg = np.column_stack([rng.uniform(lo[0], hi[0], cfg.n_background), rng.uniform(lo[1], hi[1], cfg.n_background),
                              np.full(cfg.n_background, floor_z)])
        pts.append(bg)
        cols.append(np.tile(palette[0], (cfg.n_background, 1)))
        labels.append(np.zeros(cfg.n_background, dtype=np.int64))

    x0 = np.concatenate(pts)
    labels = np.concatenate(labels).astype(np.int64)
    scene = init_scene(x0, np.concatenate(cols), seed=rng.integers(2**32))
    scene.o = labels.copy()
    scene.K = K
    N = scene.N

    rotations = np.zeros((K, T, 3))
    translations = np.zeros((K, T, 3))
    residuals = np.zeros((N, T, 3))
    states = [["resting"] * T]
    f = np.arange(T)
    for j, spec in enumerate(cfg.objects, start=1):
        rot, disp = _interp_keyframes(spec.keyframes, T)
        c = centers[j - 1]
        rotations[j] = rot
        for t in range(T):
            # rotate about the object center: x = R (x0 - c) + c + d
            translations[j, t] = c - geometry.rodrigues(rot[t]) @ c + disp[t]
        states.append(_states(spec.keyframes, T))
        if spec.residual_amplitude > 0:
            idx = np.nonzero(labels == j)[0]
            dirs = rng.normal(size=(len(idx), 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            # non-rigid wobble that grows with distance from the center
            reach = np.linalg.norm(x0[idx] - c, axis=1) / spec.radius
            phase = 2.0 * np.pi * spec.residual_frequency * f / (T - 1)
            residuals[idx] = spec.residual_amplitude * (reach[:, None, None] * np.sin(phase)[None, :, None]) * dirs[:, None, :]

    gt = GroundTruth(T=T, rotations=rotations, translations=translations, residuals=residuals,
                     xobs=np.zeros((T, N, 3)), labels=labels, noise_std=float(cfg.noise_std),
                     states=states, hand_id=cfg.hand_id)
    for t in range(T):
        gt.xobs[t] = gt.positions(x0, t)
    if cfg.noise_std > 0:
        gt.xobs += rng.normal(0.0, cfg.noise_std, size=gt.xobs.shape)
    return scene, gt


def render_all_masks(scene, gt, cams, cfg, seed=0):
    """Label grids for every (frame, camera), keyed ``(frame, cam_id)``."""
    masks = {}
    for f in range(gt.T):
        for c, cam in enumerate(cams):
            grid = render_masks(scene, gt, cam, f, cfg.mask_radius_scale)
            if cfg.label_dropout > 0:
                drop = np.random.default_rng([seed, f, c]).random(grid.shape) < cfg.label_dropout
                grid[drop] = 0
            masks[(f, c)] = grid
    return masks


# --- serialization -------------------------------------------------------------

def scene_to_dict(scene):
    return {
        "x0": scene.x0, "q0": scene.q0, "s0": scene.s0, "opacity_logit": scene.opacity_logit,
        "color": scene.color, "z": scene.z, "o": scene.o, "K": scene.K,
    }


def scene_from_dict(d):
    arr = lambda k: np.asarray(d[k], dtype=np.float64)  # noqa: E731
    return GaussianScene(x0=arr("x0"), q0=arr("q0"), s0=arr("s0"), opacity_logit=arr("opacity_logit"),
                         color=arr("color"), z=arr("z"), o=np.asarray(d["o"], dtype=np.int64), K=int(d["K"]))


def gt_to_dict(gt):
    return {
        "T": gt.T, "rotations": gt.rotations, "translations": gt.translations, "residuals": gt.residuals,
        "xobs": gt.xobs, "labels": gt.labels, "noise_std": gt.noise_std, "states": gt.states, "hand_id": gt.hand_id,
    }


def gt_from_dict(d):
    return GroundTruth(T=int(d["T"]), rotations=np.asarray(d["rotations"], dtype=np.float64),
                       translations=np.asarray(d["translations"], dtype=np.float64),
                       residuals=np.asarray(d["residuals"], dtype=np.float64),
                       xobs=np.asarray(d["xobs"], dtype=np.float64),
                       labels=np.asarray(d["labels"], dtype=np.int64), noise_std=float(d["noise_std"]),
                       states=[list(s) for s in d["states"]], hand_id=d.get("hand_id"))


def save_scene(path, scene, gt, cams, cfg=None, seed=None):
    body = {
        "GaussianScene": scene_to_dict(scene),
        "GroundTruth": gt_to_dict(gt),
        "Camera": [c.to_dict() for c in cams],
        "SceneConfig": cfg.to_dict() if cfg is not None else None,
        "seed": seed,
    }
    return write_document(path, "scene", body)


def load_scene(path):
    doc = read_document(path, "scene")
    cfg = SceneConfig.from_dict(doc["SceneConfig"]) if doc.get("SceneConfig") else None
    return (scene_from_dict(doc["GaussianScene"]), gt_from_dict(doc["GroundTruth"]),
            [Camera.from_dict(c) for c in doc["Camera"]], cfg)


def save_masks(path, masks):
    body = {"masks": {f"{f}:{c}": grid for (f, c), grid in sorted(masks.items())}}
    return write_document(path, "label_grids", body)


def load_masks(path):
    doc = read_document(path, "label_grids")
    out = {}
    for key, grid in doc["masks"].items():
        f, c = key.split(":")
        out[(int(f), int(c))] = np.asarray(grid, dtype=np.int64)
    return out
