import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqg_rendezvous.control import (CostWeights, control_axis, distributed_control, global_system,
                                     local_riccati, riccati_backward, saturate_inputs, synthesize)
from lqg_rendezvous.dynamics import DriveParams
from lqg_rendezvous.errors import ConfigurationError
from lqg_rendezvous.estimation import GlobalEstimate
from lqg_rendezvous.graph import Topology, laplacian
from lqg_rendezvous.oracles import closed_loop_cost, lq_min_cost, random_psd

from test_graph import random_adjacency


def estimate(xs, ys=None):
    xs = np.asarray(xs, dtype=float)
    ys = np.zeros_like(xs) if ys is None else np.asarray(ys, dtype=float)
    return GlobalEstimate(xs, ys, np.zeros((xs.size, 2)))


def test_scalar_horizon_one_by_hand():
    sched = riccati_backward(CostWeights.scalar(1, 1, 1, 1), [[1.0]], [[0.1]])
    l0 = 0.1 / (1 + 0.01)
    assert sched.gains[0, 0, 0] == pytest.approx(l0, rel=1e-15)
    assert sched.pi[0, 0, 0] == pytest.approx((1 - 0.1 * l0) ** 2 + l0 ** 2 + 1, rel=1e-15)
    assert sched.pi[1, 0, 0] == 1.0
    assert sched.pi.shape == (2, 1, 1) and sched.gains.shape == (1, 1, 1)


def test_nothing_penalized_gives_zero_schedule():
    sched = local_riccati(CostWeights.scalar(0, 1, 0, 7), 0.1)
    assert not sched.gains.any() and not sched.pi.any()


@pytest.mark.parametrize("seed", range(5))
def test_horizon_three_matches_least_squares(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.5, 1.5), rng.uniform(0.05, 1.0)
    q, r, qm, x0 = rng.uniform(0, 2), rng.uniform(0.1, 2), rng.uniform(0, 2), rng.uniform(-1, 1)
    sched = riccati_backward(CostWeights.scalar(q, r, qm, 3), [[a]], [[b]])
    cost = closed_loop_cost(a, b, q, r, qm, x0, sched.gains[None, :, 0, 0])[0]
    best, _ = lq_min_cost(a, b, q, r, qm, x0, 3)
    assert abs(cost - best) <= 1e-8
    assert sched.pi[0, 0, 0] * x0 ** 2 == pytest.approx(best, abs=1e-10)


def test_zero_step_length_has_no_authority():
    sched = local_riccati(CostWeights.scalar(1, 1, 1, 20), 0.0)
    assert not sched.gains.any()


def test_long_horizon_converges_to_stationary_gain():
    q, r, h = 1.0, 1.0, 0.1
    sched = local_riccati(CostWeights.scalar(q, r, 1.0, 500), h)
    # scalar algebraic Riccati root for a = 1: h^2 p^2 = q (r + h^2 p)
    p_inf = (q * h * h + math.sqrt((q * h * h) ** 2 + 4 * q * r * h * h)) / (2 * h * h)
    l_inf = h * p_inf / (r + h * h * p_inf)
    # the terminal mismatch shrinks by (1 - h L)^2 ~ 0.819 per step back from the horizon,
    # so the cost-to-go is within 1e-10 of the fixed point about 130 steps before k = 500
    contraction = (1 - h * l_inf) ** 2
    steps_needed = math.ceil(math.log(1e-10 / p_inf) / math.log(contraction))
    assert steps_needed <= 130
    window = 500 - 130
    assert np.abs(sched.gains[:window, 0, 0] - l_inf).max() < 1e-10
    assert np.abs(sched.pi[:window, 0, 0] - p_inf).max() < 1e-8
    err = np.abs(sched.pi[:500, 0, 0] - p_inf)
    assert np.all(np.diff(err[window:]) >= 0)  # monotone approach from the terminal value


def test_gain_held_beyond_horizon():
    sched = local_riccati(CostWeights.scalar(horizon=10), 0.1)
    np.testing.assert_array_equal(sched.gain_at(10), sched.gains[0])
    np.testing.assert_array_equal(sched.gain_at(1000), sched.gains[0])
    np.testing.assert_array_equal(sched.pi_at(10), sched.pi[10])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), m=st.integers(1, 3), horizon=st.integers(1, 6))
def test_pi_psd_and_monotone_in_state_weight(seed, n, m, horizon):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, n)), rng.normal(size=(n, m))
    q, qm = random_psd(rng, n), random_psd(rng, n)
    r = random_psd(rng, m) + 0.1 * np.eye(m)
    dq = random_psd(rng, n, rank=1)
    lo = riccati_backward(CostWeights(q, r, qm, horizon), a, b)
    hi = riccati_backward(CostWeights(q + dq, r, qm, horizon), a, b)
    assert lo.pi.shape == (horizon + 1, n, n) and lo.gains.shape == (horizon, m, n)
    scale = 1.0 + np.abs(hi.pi).max()
    for k in range(horizon + 1):
        np.testing.assert_allclose(lo.pi[k], lo.pi[k].T, atol=1e-12 * scale)
        assert np.linalg.eigvalsh(lo.pi[k]).min() >= -1e-9 * scale
        assert np.linalg.eigvalsh(hi.pi[k] - lo.pi[k]).min() >= -1e-9 * scale


@pytest.mark.parametrize("kwargs", [
    dict(q_state=[[-1.0]], r_input=[[1.0]], q_terminal=[[1.0]], horizon=3),
    dict(q_state=[[1.0]], r_input=[[0.0]], q_terminal=[[1.0]], horizon=3),
    dict(q_state=[[1.0]], r_input=[[1.0]], q_terminal=[[1.0]], horizon=0),
    dict(q_state=[[1.0, 2.0], [0.0, 1.0]], r_input=[[1.0]], q_terminal=np.eye(2), horizon=3),
])
def test_weights_validation(kwargs):
    with pytest.raises(ConfigurationError):
        CostWeights(**kwargs)


def test_riccati_shape_mismatch():
    with pytest.raises(ConfigurationError):
        riccati_backward(CostWeights.scalar(), np.eye(2), np.ones((2, 1)))


def test_global_mode_uses_stacked_laplacian_input():
    topo = Topology.preset("complete", 3)
    a, b = global_system(topo, 0.1)
    np.testing.assert_array_equal(a, np.eye(3))
    np.testing.assert_allclose(b, 0.1 * laplacian(topo))
    sched = synthesize("global", CostWeights.scalar(horizon=5), 0.1, topo)
    assert sched.gains.shape == (5, 3, 3) and not sched.is_scalar
    with pytest.raises(ConfigurationError):
        synthesize("central", CostWeights.scalar(horizon=5), 0.1, topo)


def test_all_equal_estimates_give_zero_input():
    u = distributed_control(estimate([0.3] * 4, [-0.2] * 4), Topology.preset("complete", 4), 0.7)
    assert np.all(u == 0.0)


def test_two_robot_example():
    u = distributed_control(estimate([1.0, 0.0]), Topology.preset("complete", 2), 0.5)
    np.testing.assert_array_equal(u[:, 0], [-0.5, 0.5])


@pytest.mark.parametrize("g", [0.1, 0.95, 3.0])
def test_preset_geometry_inputs_sum_to_zero(g):
    topo = Topology.preset("complete", 4)
    est = estimate([0.2, -0.2, -0.2, 0.2], [-0.065, -0.065, 0.065, 0.065])
    u = distributed_control(est, topo, g)
    np.testing.assert_allclose(u[:, 0], -g * laplacian(topo) @ est.xs, atol=1e-15)
    assert abs(u[:, 0].sum()) <= 1e-15 and abs(u[:, 1].sum()) <= 1e-15


@settings(max_examples=80, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2**32 - 1), c=st.floats(-5, 5), g=st.floats(-10, 10))
def test_consensus_is_equilibrium(n, seed, c, g):
    topo = Topology(n, random_adjacency(n, seed, symmetric=True))
    u = distributed_control(estimate([c] * n, [-c] * n), topo, g)
    assert np.all(u == 0.0)


def test_consensus_is_equilibrium_for_synthesized_global_gain():
    topo = Topology.preset("path", 4)
    sched = synthesize("global", CostWeights.scalar(horizon=30), 0.1, topo)
    _, v = control_axis(np.full(4, 0.25), laplacian(topo), sched.gains[0])
    assert np.abs(v).max() < 1e-14


def test_saturation_examples():
    p = DriveParams()
    u = np.array([[0.03, 0.04], [0.3, 0.4], [0.0, 0.0]])
    out = saturate_inputs(u, p)
    np.testing.assert_array_equal(out[0], u[0])
    np.testing.assert_allclose(out[1], 0.308 * u[1], rtol=1e-14)
    assert np.hypot(*out[1]) == pytest.approx(0.154, rel=1e-14)
    np.testing.assert_array_equal(out[2], [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(ux=st.floats(-5, 5), uy=st.floats(-5, 5), lim=st.floats(0.01, 1))
def test_saturation_norm_and_direction(ux, uy, lim):
    out = saturate_inputs(np.array([[ux, uy]]), DriveParams(wheel_speed_limit=lim))[0]
    assert np.hypot(*out) <= lim * (1 + 1e-12)
    assert out[0] * uy - out[1] * ux == pytest.approx(0.0, abs=1e-12)
    assert out @ np.array([ux, uy]) >= 0
