"""Interaction events between object tracks and the structured scene export document."""
from dataclasses import dataclass
import hashlib

import numpy as np

from . import __version__
from .io import dumps, write_document

APPROACH = "APPROACH"
CONTACT = "CONTACT"
SEPARATE = "SEPARATE"
EVENT_ORDER = {APPROACH: 0, CONTACT: 1, SEPARATE: 2}
EPS_V = 0.01
CONTACT_FRACTION = 0.05
MIN_EVENT_FRAMES = 2


@dataclass
class InteractionEvent:
    type: str
    pair: tuple
    frames: tuple  # inclusive (start, end)

    def to_dict(self):
        return {"type": self.type, "pair": list(self.pair), "frames": list(self.frames)}


def _runs(mask):
    """Inclusive ``(start, end)`` of each maximal run of True values."""
    out, start = [], None
    for f, on in enumerate(mask):
        if on and start is None:
            start = f
        elif not on and start is not None:
            out.append((start, f - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def derive_events(centroids, eps_v=EPS_V, eps_d=None, extent=None, min_frames=MIN_EVENT_FRAMES):
    """Pairwise APPROACH / CONTACT / SEPARATE intervals from centroid tracks ``{k: (T, 3)}``.

    Closing speed is the per-frame change of centroid distance (0 at frame 0).
    APPROACH runs where it is below ``-eps_v``, SEPARATE where it is above
    ``eps_v``, CONTACT where the distance is below ``eps_d`` (default 5% of
    ``extent``). Runs shorter than ``min_frames`` are dropped.
    """
    if eps_d is None:
        if extent is None:
            raise ValueError("give eps_d or the scene extent")
        eps_d = CONTACT_FRACTION * extent
    ids = sorted(centroids)
    events = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            j, k = ids[a], ids[b]
            d = np.linalg.norm(np.asarray(centroids[j]) - np.asarray(centroids[k]), axis=1)
            s = np.zeros_like(d)
            s[1:] = d[1:] - d[:-1]
            for kind, mask in ((APPROACH, s < -eps_v), (CONTACT, d < eps_d), (SEPARATE, s > eps_v)):
                for f0, f1 in _runs(mask):
                    if f1 - f0 + 1 >= min_frames:
                        events.append(InteractionEvent(kind, (j, k), (f0, f1)))
    events.sort(key=lambda e: (e.frames[0], EVENT_ORDER[e.type], e.pair))
    return events


def export_scene(ctx, diag, table_rows, fld=None, field_ref=None, provenance=None, eps_v=EPS_V, eps_d=None,
                 extent=None):
    """Structured, self-describing scene document.

    ``ctx`` is a kinematic context, ``diag`` a diagnostics report,
    ``table_rows[k]`` per-frame ``(omega, translation)`` pairs and ``fld`` the
    language field (objects missing from it are left out as dropped).
    """
    dropped = set(fld.dropped) if fld is not None else set()
    ids = [k for k in ctx.ids if k not in dropped]
    n_points = {o["id"]: o["n_points"] for o in diag["objects"]}
    objects, tracks = [], {}
    for k in ids:
        objects.append({
            "id": k, "n_points": n_points[k],
            "static_embedding": (f"objects/{k}/e_static" if fld is not None and k in fld.objects else None),
        })
        rows = []
        for f in range(ctx.T):
            omega, trans = table_rows[k][f]
            rows.append({
                "frame": f, "centroid": ctx.centroid[k][f], "velocity": ctx.velocity[k][f],
                "acceleration": ctx.accel[k][f], "omega": omega, "translation": trans,
                "rho": float(ctx.rho[k][f]), "residual_mean": float(ctx.res_mean[k][f]),
            })
        tracks[str(k)] = rows
    events = derive_events({k: ctx.centroid[k] for k in ids}, eps_v, eps_d, extent)
    embeddings = None
    if fld is not None:
        from .langfield import field_to_dict
        embeddings = {"path": field_ref, "sha256": hashlib.sha256(dumps(field_to_dict(fld)).encode()).hexdigest(),
                      "objects": [k for k in ids if k in fld.objects]}
    return {
        "T": ctx.T,
        "objects": objects,
        "tracks": tracks,
        "events": [e.to_dict() for e in events],
        "event_thresholds": {"eps_v": eps_v, "eps_d": eps_d if eps_d is not None else CONTACT_FRACTION * extent,
                             "min_frames": MIN_EVENT_FRAMES},
        "embeddings": embeddings,
        "diagnostics": {"global_rho": diag["global_rho"], "shuffle_ratio": diag["shuffle_ratio"]},
        "provenance": {"version": __version__, **(provenance or {})},
    }


def write_export(path, doc):
    return write_document(path, "scene_export", doc)
