"""Temporal-state retrieval metrics: activation, frame accuracy, temporal and mask IoU."""
from dataclasses import dataclass
import logging

import numpy as np

from .io import read_document, write_csv, write_document

log = logging.getLogger(__name__)

PEAK_FRACTION = 0.5


@dataclass
class Annotation:
    target: int
    query: str
    frames: list  # ground-truth active frames

    def to_dict(self):
        return {"target": self.target, "query": self.query, "frames": sorted(self.frames)}


def activate(sims):
    """Frames whose similarity is strictly above half the trace's own peak."""
    sims = np.asarray(sims, dtype=np.float64)
    if sims.size == 0:
        return np.zeros(0, dtype=bool)
    return sims > PEAK_FRACTION * sims.max()


def acc(active, gt):
    active = np.asarray(active, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if active.shape != gt.shape or active.size == 0:
        raise ValueError("activation and ground truth must be equal-length, non-empty")
    return float(np.mean(active == gt))


def tiou(P, G):
    P, G = set(P), set(G)
    union = P | G
    if not union:
        log.warning("tIoU of two empty frame sets is defined as 0")
        return 0.0
    return len(P & G) / len(union)


def mask_iou(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else None


def viou(pred_masks, gt_masks, P, G):
    """Mean mask IoU over frames in ``P ∪ G``; a frame outside ``P`` (or ``G``) uses an empty mask.

    Frames where both masks are empty are left out of the mean. An empty union
    of frames gives 0 with a warning.
    """
    P, G = set(P), set(G)
    frames = sorted(P | G)
    if not frames:
        log.warning("vIoU over an empty frame union is defined as 0")
        return 0.0
    shape = np.shape(next(iter(pred_masks.values() if pred_masks else gt_masks.values())))
    empty = np.zeros(shape, dtype=bool)
    vals = []
    for f in frames:
        pm = pred_masks[f] if f in P else empty
        gm = gt_masks[f] if f in G else empty
        v = mask_iou(pm, gm)
        if v is not None:
            vals.append(v)
    if not vals:
        log.warning("every frame in the union has two empty masks; vIoU defined as 0")
        return 0.0
    return float(np.mean(vals))


def annotations_from_states(states, ids, skip_constant=True):
    """One query per (object, state name) with the frames where the object holds that state."""
    out = []
    for k in ids:
        seq = states[k]
        for name in sorted(set(seq)):
            frames = [f for f, s in enumerate(seq) if s == name]
            if skip_constant and len(frames) == len(seq):
                continue
            out.append(Annotation(k, name, frames))
    return out


def evaluate_query(trace, ann, T, pred_masks=None, gt_masks=None):
    active = activate(trace)
    gt = np.zeros(T, dtype=bool)
    gt[list(ann.frames)] = True
    P = [int(f) for f in np.nonzero(active)[0]]
    row = {"target": ann.target, "query": ann.query, "acc": acc(active, gt), "tiou": tiou(P, ann.frames),
           "active_frames": P}
    row["viou"] = viou(pred_masks, gt_masks, P, ann.frames) if pred_masks is not None else None
    return row


def summarize(rows):
    agg = {}
    for key in ("acc", "tiou", "viou"):
        vals = [r[key] for r in rows if r[key] is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    agg["n_queries"] = len(rows)
    return agg


def save_annotations(path, T, anns):
    return write_document(path, "annotations", {"T": T, "queries": [a.to_dict() for a in anns]})


def load_annotations(path):
    doc = read_document(path, "annotations")
    T = int(doc["T"])
    anns = [Annotation(int(q["target"]), str(q["query"]), [int(f) for f in q["frames"]]) for q in doc["queries"]]
    for a in anns:
        if any(f < 0 or f >= T for f in a.frames):
            raise ValueError(f"annotation for {a.query!r} has frames outside [0, {T - 1}]")
    return T, anns


def write_report(json_path, csv_path, rows, summary):
    write_document(json_path, "eval_report", {"queries": rows, "summary": summary})
    if csv_path is not None:
        write_csv(csv_path, ["target", "query", "acc", "tiou", "viou"],
                  [[r["target"], r["query"], r["acc"], r["tiou"], "" if r["viou"] is None else r["viou"]] for r in rows])
