import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from kinefield import deform, motion, scene as sc


def _points(n=10, seed=0):
    return np.random.default_rng(seed).normal(size=(n, 3))


def test_near_identity_init_bound():
    x0 = _points(50)
    o = np.repeat([0, 1], 25)
    for mode in (motion.SE3, motion.AFFINE):
        table = motion.MotionTable.create(2, 6, mode, seed=3)
        for f in range(6):
            xt = motion.object_predict(table, x0, o, f)
            bound = 10 * motion.INIT_STD * (1 + np.linalg.norm(x0, axis=1))
            assert np.all(np.linalg.norm(xt - x0, axis=1) <= bound)


def test_pure_translation_and_affine_agreement():
    x0 = _points()
    o = np.array([0] * 4 + [1] * 6)
    se3 = motion.MotionTable.create(2, 3, motion.SE3, std=0.0)
    aff = motion.MotionTable.create(2, 3, motion.AFFINE, std=0.0)
    se3.params["trans"][1, 2] = [1.0, 0.0, 0.0]
    aff.params["b"][1, 2] = [1.0, 0.0, 0.0]
    a = motion.object_predict(se3, x0, o, 2)
    b = motion.object_predict(aff, x0, o, 2)
    assert np.array_equal(a[4:], x0[4:] + [1.0, 0.0, 0.0])
    assert np.array_equal(a[:4], x0[:4])
    assert np.array_equal(a, b)


def test_frame_index_rejected_off_grid():
    table = motion.MotionTable.create(1, 4)
    for f in (0.5, -1, 4):
        with pytest.raises(ValueError):
            table.linear(0, f)
    with pytest.raises(ValueError):
        motion.MotionTable.create(1, 2, mode="MLP")


def test_residual_identities():
    rng = np.random.default_rng(1)
    x, xt = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    assert not motion.residual(x, x).any()
    r = motion.residual(x, xt)
    # exact up to one rounding of the subtraction
    np.testing.assert_allclose(xt + r, x, rtol=0, atol=4 * np.finfo(float).eps * np.abs(x).max())
    with pytest.raises(ValueError):
        motion.residual(x, xt[:4])


def test_rigid_share_examples():
    x0 = _points(6)
    shifted = x0 + [1.0, 0.0, 0.0]
    assert motion.rigid_share(x0, shifted, np.zeros_like(x0)) == pytest.approx(1.0 / (1.0 + 1e-8), abs=1e-15)
    assert motion.rigid_share(x0, x0, np.ones_like(x0)) == pytest.approx(0.0, abs=1e-7)
    assert motion.rigid_share(x0, x0, np.zeros_like(x0)) == 0.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (8, 3), elements=st.floats(-2, 2)), arrays(np.float64, (8, 3), elements=st.floats(-2, 2)),
       arrays(np.float64, (8, 3), elements=st.floats(-2, 2)), st.lists(st.integers(0, 2), min_size=8, max_size=8))
def test_rigid_share_bounds_and_weighted_average(x0, xt, r, labels):
    rho = motion.rigid_share(x0, xt, r)
    assert 0.0 <= rho <= 1.0
    o = np.array(labels)
    per = motion.rigid_share_per_object(x0, xt, r, o, 3)
    counts = np.bincount(o, minlength=3)
    assert np.sum(per * counts) / len(o) == pytest.approx(rho, abs=1e-12)


def test_rigid_share_grad_matches_fd():
    rng = np.random.default_rng(4)
    x0, xt, x = rng.normal(size=(3, 7, 3))
    rho, gx, gxt = motion.rigid_share_grad(x0, xt, x - xt)
    h = 1e-6
    for arr, g, which in ((x, gx, "x"), (xt, gxt, "xt")):
        for i in range(7):
            for c in range(3):
                old = arr[i, c]
                arr[i, c] = old + h
                fp = motion.rigid_share(x0, xt, x - xt)
                arr[i, c] = old - h
                fm = motion.rigid_share(x0, xt, x - xt)
                arr[i, c] = old
                assert abs((fp - fm) / (2 * h) - g[i, c]) < 1e-6, which


@pytest.mark.parametrize("mode", [motion.SE3, motion.AFFINE])
def test_predict_vjp_matches_fd(mode):
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(9, 3))
    o = np.array([0, 0, 1, 1, 1, 2, 2, 2, 2])
    table = motion.MotionTable.create(3, 2, mode, seed=1, std=0.3)
    g = rng.normal(size=(9, 3))
    grads = {k: np.zeros_like(v) for k, v in table.params.items()}
    motion.object_predict_vjp(table, x0, o, 1, g, grads)
    h = 1e-6
    for name, arr in table.params.items():
        flat, gflat = arr.reshape(-1), grads[name].reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + h
            fp = np.sum(g * motion.object_predict(table, x0, o, 1))
            flat[idx] = old - h
            fm = np.sum(g * motion.object_predict(table, x0, o, 1))
            flat[idx] = old
            assert abs((fp - fm) / (2 * h) - gflat[idx]) < 1e-6


def test_ground_truth_table_gives_vanishing_residual():
    cfg = sc.SceneConfig(T=4, objects=[sc.ObjectSpec(n_points=20, keyframes=[sc.Keyframe(0), sc.Keyframe(3, (0, 0.4, 0), (0.2, 0, 0))])])
    scene, gt = sc.generate_synthetic(cfg, 1)
    table = motion.MotionTable.create(scene.K, gt.T, std=0.0)
    for k in range(scene.K):
        for f in range(gt.T):
            table.params["omega"][k, f] = gt.rotations[k, f]
            table.params["trans"][k, f] = gt.translations[k, f]
    for f in range(gt.T):
        r = motion.residual(gt.xobs[f], motion.object_predict(table, scene.x0, scene.o, f))
        assert np.abs(r).max() < 1e-12


def test_deform_forward_independent_of_table():
    rng = np.random.default_rng(2)
    scene = sc.init_scene(rng.normal(size=(5, 3)), rng.uniform(size=(5, 3)), seed=0)
    net = deform.DeformNet.create(0)
    net.params["W4"] = rng.normal(size=net.params["W4"].shape)
    before, _ = deform.deform_forward(net, scene, 0.5)
    table = motion.MotionTable.create(2, 3, seed=4, std=1.0)
    motion.object_predict(table, scene.x0, np.zeros(5, dtype=int), 1)
    after, _ = deform.deform_forward(net, scene, 0.5)
    assert before.x.tobytes() == after.x.tobytes() and before.q.tobytes() == after.q.tobytes()
