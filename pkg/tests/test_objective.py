import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import fd_check, fd_problem
from kinefield import motion, objective as obj
from kinefield.objective import AUX_TERMS, Batch, LossWeights, Schedule

TERMS = ("fit",) + AUX_TERMS


def test_fidelity_examples():
    x = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0], [-1.0, 0.5, 0.0]])
    assert obj.fidelity_loss(x, x) == 0.0
    d = np.array([0.3, -0.4, 1.2])
    assert obj.fidelity_loss(x + d, x) == pytest.approx(d @ d, rel=1e-14)
    y = np.array([[1.0, 0.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.5, 1.0]])
    assert obj.fidelity_loss(x, y) == pytest.approx((1.0 + 4.0 + 2.0) / 3.0, rel=1e-15)
    with pytest.raises(ValueError):
        obj.fidelity_loss(x, y[:2])


def test_modulation_equal_residuals_gives_half():
    rbar, m = obj.update_modulation(np.full(5, 0.2), np.tile([0.2, 0.0, 0.0], (5, 1)))
    np.testing.assert_allclose(m, 0.5, atol=1e-12)


def test_modulation_largest_residual_largest_weight(rng):
    r = rng.normal(size=(30, 3))
    rbar, m = obj.update_modulation(np.zeros(30), r)
    assert np.argmax(m) == np.argmax(np.linalg.norm(r, axis=1))


def test_modulation_ema_converges_to_constant_residual(rng):
    r = rng.normal(size=(10, 3))
    rbar = np.zeros(10)
    for _ in range(500):
        rbar, _ = obj.update_modulation(rbar, r)
    np.testing.assert_allclose(rbar, np.linalg.norm(r, axis=1), atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 12, elements=st.floats(0, 2)), st.integers(0, 11), st.floats(0, 2))
def test_modulation_bounds_and_monotone(rbar, i, bump):
    m = obj.modulation_weights(rbar)
    assert np.all((m > 0) & (m < 1))
    raised = rbar.copy()
    raised[i] += bump
    assert obj.modulation_weights(raised)[i] >= m[i] - 1e-12


def test_modulated_residual_examples(rng):
    r = rng.normal(size=(6, 3))
    assert obj.modulated_residual_loss(np.zeros((6, 3)), rng.random(6)) == 0.0
    assert obj.modulated_residual_loss(r, np.ones(6)) == 0.0
    units = np.eye(3)[[0, 1, 2, 0]]
    assert obj.modulated_residual_loss(units, np.zeros(4)) == 1.0


def test_hinge_examples():
    assert obj.share_hinge(0.528) == 0.0
    assert obj.share_hinge(0.0) == pytest.approx(0.1225, abs=1e-15)
    assert obj.share_hinge(0.30) == pytest.approx(0.0025, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.35, 1.0))
def test_hinge_zero_above_target(rho):
    assert obj.share_hinge(rho) == 0.0 and obj.share_hinge_grad(rho) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.34))
def test_hinge_gradient_below_target(rho):
    h = 1e-7
    fd = (obj.share_hinge(rho + h) - obj.share_hinge(rho - h)) / (2 * h)
    assert obj.share_hinge_grad(rho) == pytest.approx(fd, abs=1e-6)


def test_velocity_examples():
    a, b = np.array([[0.1, 0.0, 0.0], [0.0, 0.2, 0.0]]), np.zeros((2, 3))
    assert obj.velocity_coherence(a, b, a, b) == 0.0
    assert obj.velocity_coherence(a, b, a + 4.0, b + 4.0) < 1e-30
    d = np.array([0.03, -0.01, 0.02])
    assert obj.velocity_coherence(b + d, b, b, b) == pytest.approx(d @ d, rel=1e-14)
    # hand case: u0 = (0.1,0,0) - (0.05,0,0), u1 = (0,0.2,0) - (0,0,0.1)
    xt_t = np.array([[0.05, 0.0, 0.0], [0.0, 0.0, 0.1]])
    assert obj.velocity_coherence(a, b, xt_t, b) == pytest.approx((0.05**2 + 0.2**2 + 0.1**2) / 2, rel=1e-14)


def test_temporal_smooth_examples():
    table = motion.MotionTable.create(3, 4, std=0.0)
    assert obj.temporal_smooth(table, 2) == 0.0
    table.params["trans"][1] = np.outer(np.arange(4), [0.1, 0.0, 0.0])
    assert obj.temporal_smooth(table, 2) == pytest.approx(0.01 / 3, rel=1e-12)
    assert obj.temporal_smooth(table, 0) == 0.0
    aff = motion.MotionTable.create(2, 3, motion.AFFINE, std=0.0)
    aff.params["dA"][0, 1] = np.diag([0.1, 0.2, 0.0])
    aff.params["b"][0, 1] = [0.0, 0.0, 0.3]
    assert obj.temporal_smooth(aff, 1) == pytest.approx((0.01 + 0.04 + 0.09) / 2, rel=1e-12)


def test_identity_prior_examples():
    table = motion.MotionTable.create(2, 5, std=0.0)
    assert obj.identity_prior(table, ()) == 0.0
    assert obj.identity_prior(table, (0,)) == 0.0
    table.params["trans"][0, 2] = [0.1, 0.0, 0.0]
    # mean over the static object's five frames of a sum containing 0.01
    assert obj.identity_prior(table, (0,)) == pytest.approx(0.01 / 5, rel=1e-12)


def test_schedule_examples():
    s = Schedule()
    assert all(v == 0.0 for v in s.gates(0).values())
    assert all(v == 0.5 for v in s.gates(750).values())
    assert all(v == 1.0 for v in s.gates(1000).values())
    assert all(v == 1.0 for v in s.gates(5000).values())
    assert all(v == 1.0 for v in Schedule(force_all=True).gates(0).values())
    assert Schedule(scale=2.0).gates(1500)["res"] == 0.5
    assert Schedule(warmup_start=100).validate()


@pytest.mark.parametrize("mode", [motion.SE3, motion.AFFINE])
@pytest.mark.parametrize("term", TERMS)
def test_gradients_match_finite_differences(mode, term):
    worst, checked = fd_check(mode, term)
    assert checked > 0
    assert worst < 1e-4


def test_inactive_terms_contribute_nothing():
    _, net, z, table, x0, o, xobs, m = fd_problem(motion.SE3)
    b = Batch(f=2, T=5, xobs_f=xobs[2], xobs_p=xobs[1])
    gates = {k: 0.0 for k in AUX_TERMS}
    only_fit = obj.evaluate(net, z, table, x0, o, b, LossWeights(), gates, m=m)
    zero_w = obj.evaluate(net, z, table, x0, o, b, LossWeights(res=0, share=0, vel=0, smooth=0, id=0),
                          {k: 1.0 for k in AUX_TERMS}, m=m)
    assert only_fit.loss == zero_w.loss == only_fit.terms["fit"]
    for k in only_fit.grads["net"]:
        assert only_fit.grads["net"][k].tobytes() == zero_w.grads["net"][k].tobytes()
    assert not any(v.any() for v in only_fit.grads["table"].values())


def test_weights_validation():
    assert LossWeights(res=-1.0).validate()
    assert LossWeights(tau=1.5).validate()
    assert not LossWeights().validate()
