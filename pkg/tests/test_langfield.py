import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import gd_ridge, ridge_instances
from kinefield import langfield as lf, scene as sc


def _cam():
    return sc.Camera(np.array([0.0, 0.0, -5.0]), np.zeros(3), np.array([0.0, 1.0, 0.0]), 50.0, 64, 48)


def test_crop_bbox_grid_by_hand():
    g = (np.arange(11) - 5) * 0.1
    xs, ys = np.meshgrid(g, g)
    pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    box = lf.crop_bbox(_cam(), pts)
    # u and v take the values c-5..c+5 (c = 32, 24), each 11 times among 121 samples;
    # the 2nd/98th percentiles sit at sorted positions 2.4 and 117.6, i.e. on the end values
    span = 10.0
    assert box == pytest.approx((27 - 0.12 * span, 19 - 0.12 * span, 37 + 0.12 * span, 29 + 0.12 * span))


def test_crop_bbox_degenerate_and_clamped():
    cam = _cam()
    pts = np.zeros((6, 3))
    assert lf.crop_bbox(cam, pts) == (32.0, 24.0, 32.0, 24.0)
    wide = np.column_stack([np.linspace(-0.3, 0.7, 20), np.zeros(20), np.zeros(20)])
    wide[:, 0] *= 10
    box = lf.crop_bbox(cam, wide)
    assert box[0] >= 0.0 and box[2] <= cam.width


def test_crop_bbox_offscreen_not_visible():
    cam = _cam()
    assert lf.crop_bbox(cam, np.full((10, 3), 100.0)) is None
    assert lf.crop_bbox(cam, np.zeros((4, 3))) is None


def test_static_embedding_examples(rng):
    e = lf.unit(rng.normal(size=8))
    np.testing.assert_allclose(lf.static_embedding([e]), e)
    np.testing.assert_allclose(lf.static_embedding([e, e, e]), e)
    with pytest.raises(ValueError):
        lf.static_embedding([e, -e])
    with pytest.raises(ValueError):
        lf.static_embedding(np.zeros((0, 8)))


def test_ridge_zero_target_and_shrinkage(rng):
    F = rng.normal(size=(12, 29))
    assert not lf.fit_ridge(F, np.zeros((12, 5))).any()
    dE = rng.normal(size=(12, 5))
    W = lf.fit_ridge(F, dE, lam=1e9)
    assert np.linalg.norm(W) <= np.linalg.norm(F.T @ dE) / 1e9
    with pytest.raises(ValueError):
        lf.fit_ridge(F, dE[:3])


def test_ridge_matches_descent_oracle_small():
    F, dE = ridge_instances(n=1, sizes=(10,), dim=16, seed=7)[0]
    np.testing.assert_allclose(lf.fit_ridge(F, dE), gd_ridge(F, dE, lf.RIDGE_LAMBDA), rtol=0, atol=1e-6)


def test_ridge_local_minimum_spot_check():
    F, dE = ridge_instances(n=1, sizes=(30,), seed=3)[0]
    W = lf.fit_ridge(F, dE)
    base = lf.ridge_objective(F, dE, W)
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert base <= lf.ridge_objective(F, dE, W + rng.normal(0, 1e-3, W.shape))


def test_predict_embedding_examples(rng):
    e = lf.unit(rng.normal(size=6))
    f = rng.normal(size=29)
    np.testing.assert_allclose(lf.predict_embedding(e, f, np.zeros((29, 6))), e)
    W = np.zeros((29, 6))
    W[-1] = rng.normal(size=6)
    bias_only = np.zeros(29)
    bias_only[-1] = 1.0
    np.testing.assert_allclose(lf.predict_embedding(e, bias_only, W), lf.unit(e + W[-1]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 29, elements=st.floats(-3, 3)), st.integers(0, 1000))
def test_predict_embedding_unit_norm(f, seed):
    rng = np.random.default_rng(seed)
    e = lf.unit(rng.normal(size=8))
    W = rng.normal(0, 0.01, (29, 8))
    assert np.linalg.norm(lf.predict_embedding(e, f, W)) == pytest.approx(1.0)


def test_synchronize_examples(rng):
    e = lf.unit(rng.normal(size=(5, 8)))
    const = np.tile(e[0], (5, 1))
    np.testing.assert_allclose(lf.synchronize(const, {f: const[f] for f in range(5)}), const, atol=1e-15)
    obs = {f: e[f] for f in (0, 1, 3, 4)}
    no_ema = lf.synchronize(e[::-1], obs, gamma=0.0)
    np.testing.assert_allclose(no_ema[2], e[::-1][2])
    np.testing.assert_allclose(no_ema[1], lf.unit(0.65 * e[::-1][1] + 0.35 * e[1]))
    smooth = lf.synchronize(e[::-1], obs)
    np.testing.assert_allclose(smooth[2], lf.unit(0.85 * e[::-1][2] + 0.15 * smooth[1]))
    np.testing.assert_allclose(smooth[0], lf.unit(0.65 * e[::-1][0] + 0.35 * e[0]))
    assert np.all(np.isfinite(smooth))


def _toy_field(static_only=False, T=12, drop=()):
    states = [["rest"] * T, ["rest"] * 4 + ["open"] * 4 + ["rest"] * 4, ["spin"] * 6 + ["rest"] * 6]
    enc = lf.SyntheticEncoder(states, dim=16, seed=2)
    rng = np.random.default_rng(1)
    features = {}
    for k in (1, 2):
        raw = rng.normal(0, 0.01, (T, 28))
        on = np.array([s != "rest" for s in states[k]], dtype=float)
        raw[:, 0] += on
        features[k] = raw
    obs = {k: {f: enc.encode_crop(k, f) for f in range(T) if f not in drop} for k in (1, 2)}
    return lf.fit_field(features, obs, enc, static_only=static_only), enc


def test_query_score_argmax_object_and_frame():
    fld, enc = _toy_field()
    scores = lf.query_score(fld, enc.encode_text("open"))
    assert lf.rank_objects(scores)[0] == 1
    assert 4 <= scores[1][2] <= 8
    scores = lf.query_score(fld, enc.encode_text("spin"))
    assert lf.rank_objects(scores)[0] == 2 and scores[2][2] < 6


def test_query_score_static_field_and_orthogonal_query():
    fld, enc = _toy_field(static_only=True)
    q = enc.encode_text("object 1")
    s = lf.query_score(fld, q)
    assert s[1][0] == pytest.approx(fld.objects[1].e_static @ q)
    ob = fld.objects[1]
    qo = lf.unit(np.linalg.svd(np.vstack([ob.e_static, ob.e_sync, fld.objects[2].e_sync]))[2][-1])
    assert all(abs(v[0]) < 1e-12 for v in lf.query_score(fld, qo).values())


def test_occluded_frames_never_missing():
    fld, _ = _toy_field(drop=range(3, 7))
    for ob in fld.objects.values():
        assert ob.e_sync.shape == (12, 16) and np.all(np.isfinite(ob.e_sync))
        np.testing.assert_allclose(np.linalg.norm(ob.e_sync, axis=1), 1.0)


def test_refit_is_independent_per_object():
    fld, enc = _toy_field()
    features = {2: np.random.default_rng(9).normal(size=(12, 28))}
    obs = {2: {f: enc.encode_crop(2, f) for f in range(12)}}
    again = lf.fit_field(features, obs, enc)
    fld.objects[2] = again.objects[2]
    ref, _ = _toy_field()
    assert np.array_equal(fld.objects[1].W, ref.objects[1].W)


def test_unobserved_object_dropped():
    fld, enc = _toy_field()
    features = {1: np.zeros((12, 28)), 2: np.zeros((12, 28))}
    obs = {1: {0: enc.encode_crop(1, 0)}, 2: {}}
    f2 = lf.fit_field(features, obs, enc)
    assert f2.dropped == [2] and list(f2.objects) == [1]


def test_field_and_encoder_round_trip(tmp_path):
    fld, enc = _toy_field()
    lf.save_field(tmp_path / "f.json", fld)
    back = lf.load_field(tmp_path / "f.json")
    for k in fld.objects:
        assert np.array_equal(back.objects[k].e_sync, fld.objects[k].e_sync)
        assert np.array_equal(back.objects[k].W, fld.objects[k].W)
    enc2 = lf.encoder_from_dict(back.encoder)
    assert np.array_equal(enc2.encode_crop(1, 3), enc.encode_crop(1, 3))


def test_file_encoder(tmp_path):
    doc = {"dim": 3, "crops": {"1:0": [1, 0, 0], "1:2": [0, 2, 0]}, "texts": {"Red Cup": [0, 0, 1]}}
    p = tmp_path / "emb.json"
    p.write_text(json.dumps(doc))
    enc = lf.FileEncoder(p)
    np.testing.assert_allclose(enc.encode_crop(1, 2), [0, 1, 0])
    assert enc.encode_crop(1, 1) is None
    np.testing.assert_allclose(enc.encode_text("red cup"), [0, 0, 1])
    with pytest.raises(KeyError):
        enc.encode_text("blue")
    p.write_text(json.dumps({"dim": 3, "crops": {"1:0": [1, 0]}}))
    with pytest.raises(ValueError):
        lf.FileEncoder(p)


def test_synthetic_encoder_determinism_and_unit_norm():
    enc = lf.SyntheticEncoder([["a", "b"]], dim=32, seed=5)
    e = enc.encode_crop(0, 1)
    assert np.array_equal(e, lf.SyntheticEncoder([["a", "b"]], dim=32, seed=5).encode_crop(0, 1))
    assert np.linalg.norm(e) == pytest.approx(1.0)
    assert np.array_equal(enc.encode_text(" B "), enc.state_vector("b"))
