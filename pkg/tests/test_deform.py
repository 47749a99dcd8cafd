import numpy as np
import pytest

from kinefield import deform, geometry, scene as sc


@pytest.fixture
def small_scene():
    rng = np.random.default_rng(0)
    s = sc.init_scene(rng.normal(size=(6, 3)), rng.uniform(size=(6, 3)), seed=1)
    return s


def _trained_net(seed=3, scale=0.3):
    net = deform.DeformNet.create(seed)
    rng = np.random.default_rng(seed + 1)
    net.params["W4"] = rng.normal(0, scale, net.params["W4"].shape)
    net.params["b4"] = rng.normal(0, scale, 9)
    return net


def test_parameter_count_and_input_width():
    net = deform.DeformNet.create(0)
    assert deform.IN_DIM == 48
    expected = 48 * 128 + 128 + 2 * (128 * 128 + 128) + 128 * 9 + 9
    assert expected == 40457
    assert net.n_params() == deform.N_PARAMS == expected
    assert not net.params["W4"].any() and not net.params["b4"].any()


def test_identity_at_construction(small_scene):
    net = deform.DeformNet.create(5)
    for t in (0.0, 0.3, 1.0):
        st, _ = deform.deform_forward(net, small_scene, t)
        assert np.array_equal(st.x, small_scene.x0)
        np.testing.assert_array_equal(st.s, np.exp(small_scene.s0))
        np.testing.assert_allclose(st.q, small_scene.q0, atol=1e-15)


def test_deformed_state_invariants(small_scene):
    st, _ = deform.deform_forward(_trained_net(), small_scene, 0.4)
    assert np.all(st.s > 0)
    np.testing.assert_allclose(np.linalg.norm(st.q, axis=1), 1.0, atol=1e-12)
    assert np.abs(st.dx).max() > 0


def test_final_layer_slope(small_scene):
    net = _trained_net()
    dx0, _, _, cache = deform.deform_rows(net, small_scene.x0, small_scene.z, [0.5])
    h = cache.hidden[-1]
    j, c, delta = 7, 1, 1e-3
    net.params["W4"][j, c] += delta
    dx1, _, _, _ = deform.deform_rows(net, small_scene.x0, small_scene.z, [0.5])
    np.testing.assert_allclose((dx1[:, c] - dx0[:, c]) / delta, 0.10 * h[:, j], rtol=1e-7, atol=1e-12)


def test_zero_upstream_gives_zero_gradients(small_scene):
    net = _trained_net()
    _, _, _, cache = deform.deform_rows(net, small_scene.x0, small_scene.z, [0.2, 0.7])
    g = deform.deform_backward(net, cache, np.zeros((12, 3)))
    assert all(not v.any() for v in g.values())


def test_backward_requires_cache():
    with pytest.raises(ValueError):
        deform.deform_backward(deform.DeformNet.create(0), None, np.zeros((1, 3)))


def _scalar(net, x0, z, times, wx, ww, wl):
    dx, dw, dl, cache = deform.deform_rows(net, x0, z, times)
    return float(np.sum(wx * dx) + np.sum(ww * dw) + np.sum(wl * dl)), cache


def test_gradients_match_finite_differences(small_scene):
    rng = np.random.default_rng(9)
    net = _trained_net()
    for k in net.params:
        net.params[k] = net.params[k] + rng.normal(0, 0.05, net.params[k].shape)
    times = [0.1, 0.8]
    rows = len(times) * small_scene.N
    wx, ww, wl = (rng.normal(size=(rows, 3)) for _ in range(3))
    z = small_scene.z.copy()
    _, cache = _scalar(net, small_scene.x0, z, times, wx, ww, wl)
    g = deform.deform_backward(net, cache, wx, ww, wl)
    h = 1e-5
    for name, arr in list(net.params.items()) + [("z", z)]:
        flat = arr.reshape(-1)
        for idx in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + h
            fp, _ = _scalar(net, small_scene.x0, z, times, wx, ww, wl)
            flat[idx] = old - h
            fm, _ = _scalar(net, small_scene.x0, z, times, wx, ww, wl)
            flat[idx] = old
            fd = (fp - fm) / (2 * h)
            an = g[name].reshape(-1)[idx]
            assert abs(an - fd) <= 1e-4 * max(abs(fd), abs(an), 1e-6), (name, idx, an, fd)


def test_z_gradient_is_row_local(small_scene):
    net = _trained_net()
    for k in net.params:
        net.params[k] = net.params[k] + 0.05
    _, _, _, cache = deform.deform_rows(net, small_scene.x0, small_scene.z, [0.3])
    gdx = np.zeros((small_scene.N, 3))
    gdx[2] = [1.0, -1.0, 0.5]
    gz = deform.deform_backward(net, cache, gdx)["z"]
    assert gz[2].any()
    assert not np.delete(gz, 2, axis=0).any()


def test_stacked_frames_bitwise_equal_single_frames(small_scene):
    net = _trained_net()
    times = [0.0, 0.25, 1.0]
    stacked, _, _, _ = deform.deform_rows(net, small_scene.x0, small_scene.z, times)
    for j, t in enumerate(times):
        single, _ = deform.deform_forward(net, small_scene, t)
        n = small_scene.N
        assert stacked[j * n:(j + 1) * n].tobytes() == single.dx.tobytes()


def test_time_encoding_in_inputs(small_scene):
    X = deform.build_inputs(small_scene.x0, small_scene.z, [0.5])
    np.testing.assert_array_equal(X[:, 35:], np.tile(geometry.posenc([0.5]), (small_scene.N, 1)))
