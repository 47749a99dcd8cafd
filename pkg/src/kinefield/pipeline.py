"""Glue between trained state, kinematics, the language field and evaluation."""
import numpy as np

from . import diagnostics, evalkit, kinematics, langfield
from .scene import render_labels, render_masks

REFERENCE_CAMERA = 0


def kinematic_context(state, scene, gt, cams, roll=None):
    roll = diagnostics.rollout(state, scene, gt.T) if roll is None else roll
    return kinematics.build_context(state, scene, gt.T, cams[REFERENCE_CAMERA], gt.hand_id, roll), roll


def build_field(state, scene, gt, cams, encoder, static_only=False, drop=None, ctx=None, roll=None, **kw):
    """Observe every object through the reference camera and fit its language field entry."""
    if ctx is None:
        ctx, roll = kinematic_context(state, scene, gt, cams, roll)
    elif roll is None:
        roll = diagnostics.rollout(state, scene, gt.T)
    obs = langfield.observe(encoder, cams[REFERENCE_CAMERA], roll.x, scene.o, ctx.ids, drop)
    features = {k: kinematics.feature_matrix(ctx, k) for k in ctx.ids}
    fld = langfield.fit_field(features, obs, encoder, static_only=static_only, **kw)
    return fld, ctx, roll


def object_masks(scene, gt, cams, roll, k):
    """Predicted (rendered from deformed points) and generator masks of object ``k`` per frame."""
    cam = cams[REFERENCE_CAMERA]
    idx = scene.members(k)
    pred, truth = {}, {}
    for f in range(gt.T):
        pred[f] = render_labels(cam, roll.x[f, idx], np.ones(len(idx), dtype=np.int64), scene.s0[idx]) > 0
        truth[f] = render_masks(scene, gt, cam, f) == k
    return pred, truth


def evaluate_field(fld, encoder, anns, T, scene=None, gt=None, cams=None, roll=None):
    """Score each annotation on its target object's trace; vIoU needs the scene, cameras and rollout."""
    rows = []
    masks = {}
    for ann in anns:
        if ann.target not in fld.objects:
            continue
        q = encoder.encode_text(ann.query)
        trace = fld.objects[ann.target].e_sync @ q
        pm = gm = None
        if roll is not None:
            if ann.target not in masks:
                masks[ann.target] = object_masks(scene, gt, cams, roll, ann.target)
            pm, gm = masks[ann.target]
        rows.append(evalkit.evaluate_query(trace, ann, T, pm, gm))
    return rows, evalkit.summarize(rows)
