import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqg_rendezvous import analysis
from lqg_rendezvous.analysis import (StabilityBoundParams, estimate_decay_rate, evaluate_cost,
                                      lyapunov_constants, lyapunov_sequence, ms_bound, noise_floor,
                                      quadratic_expectation_oracle)
from lqg_rendezvous.control import CostWeights, GainSchedule, local_riccati
from lqg_rendezvous.dynamics import DriveParams, NoiseSpec, RobotState
from lqg_rendezvous.errors import ConfigurationError, EvaluationError, FitError
from lqg_rendezvous.graph import Topology
from lqg_rendezvous.oracles import random_psd, random_symmetric
from lqg_rendezvous.sim import ScenarioConfig, run_episode

from conftest import make_trace


def constant_schedule(pi, steps=3):
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    n = pi.shape[0]
    return GainSchedule(np.repeat(pi[None], steps + 1, axis=0), np.zeros((steps, n, n)))


# ---------------------------------------------------------------- costs

def test_cost_of_zero_trajectory_is_zero():
    trace = make_trace(np.zeros((4, 3, 2)))
    assert evaluate_cost(trace, CostWeights.scalar(horizon=3)) == 0.0


def test_cost_horizon_one_by_hand():
    trace = make_trace(np.ones((2, 1, 2)))
    assert evaluate_cost(trace, CostWeights.scalar(1, 1, 1, 1), "x") == 2.0
    assert evaluate_cost(trace, CostWeights.scalar(1, 1, 1, 1), "y") == 2.0


def test_cost_counts_inputs_and_target():
    est = np.zeros((3, 1, 2))
    est[:, 0, 0] = [1.5, 1.2, 1.1]
    u = np.zeros((3, 1, 2))
    u[:, 0, 0] = [0.5, 0.2, 0.0]
    trace = make_trace(est, u, target=(1.0, 0.0))
    expected = 0.25 + 0.25 + 0.04 + 0.04 + 3 * 0.01
    assert evaluate_cost(trace, CostWeights.scalar(1, 1, 3, 2)) == pytest.approx(expected, rel=1e-14)


def test_cost_needs_full_horizon():
    with pytest.raises(EvaluationError):
        evaluate_cost(make_trace(np.zeros((3, 2, 2))), CostWeights.scalar(horizon=5))


# ------------------------------------------------------------ Lyapunov

def test_lyapunov_examples():
    est = np.zeros((2, 1, 2))
    est[1, 0, 0] = 3.0
    v = lyapunov_sequence(make_trace(est), constant_schedule(2.0, 1))
    np.testing.assert_array_equal(v, [0.0, 18.0])


def test_lyapunov_matrix_form():
    rng = np.random.default_rng(0)
    pi = random_psd(rng, 3)
    est = rng.normal(size=(4, 3, 2))
    v = lyapunov_sequence(make_trace(est), constant_schedule(pi, 3), "y")
    np.testing.assert_allclose(v, [e @ pi @ e for e in est[:, :, 1]], rtol=1e-12)


def test_lyapunov_constants_default_weights():
    lo, hi = lyapunov_constants(local_riccati(CostWeights.scalar(horizon=600), 0.1))
    assert lo == 1.0
    assert hi == pytest.approx(10.512, abs=1e-3)


# --------------------------------------------------------- noise floor

def test_noise_floor_noiseless_is_zero():
    mu = noise_floor(constant_schedule(1.0), np.zeros((3, 2, 2)), np.zeros((3, 2)), 0.0, [0.0, 0.0])
    np.testing.assert_array_equal(mu, [0.0, 0.0])


def test_noise_floor_scalar_example():
    mu = noise_floor(constant_schedule(1.0, 1), np.full((2, 1, 1), 0.5), np.full((2, 1), 1e-5), 1e-8, [1e-4])
    assert mu.shape == (1,)
    assert mu[0] == pytest.approx(0.25 * 1e-5 + 0.25 * 1e-8 + 0.25 * 1e-4, rel=1e-14)


def explicit_noise_floor(pi, k_rows, p, q, v):
    """Stacked-matrix evaluation with block-diagonal gains, H = I_N kron 1_C."""
    n, c = k_rows.shape
    kbar = np.zeros((n, n * c))
    for i in range(n):
        kbar[i, i * c:(i + 1) * c] = k_rows[i]
    hbar = np.kron(np.eye(n), np.ones((c, 1)))
    g = kbar @ hbar
    vbar = np.kron(np.eye(n), np.diag(v))
    core = g.T @ pi @ g
    return np.trace(core @ np.diag(p)) + np.trace(core * q) + np.trace(kbar.T @ pi @ kbar @ vbar)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), c=st.integers(1, 3), t=st.integers(2, 6))
def test_noise_floor_matches_explicit_matrices(seed, n, c, t):
    rng = np.random.default_rng(seed)
    pis = np.stack([random_psd(rng, n) for _ in range(t)])
    sched = GainSchedule(pis, np.zeros((t - 1, n, n)))
    gains = rng.uniform(0, 0.5, (t, n, c))
    covs = rng.uniform(0, 1e-4, (t, n))
    q, v = rng.uniform(0, 1e-6), rng.uniform(0, 1e-3, c)
    mu = noise_floor(sched, gains, covs, q, v)
    ref = [explicit_noise_floor(pis[k + 1], gains[k + 1], covs[k], q, v) for k in range(t - 1)]
    np.testing.assert_allclose(mu, ref, rtol=1e-11, atol=1e-300)


def test_noise_floor_rejects_negative_variance():
    with pytest.raises(ConfigurationError):
        noise_floor(constant_schedule(1.0), np.zeros((3, 1, 1)), np.zeros((3, 1)), -1.0, [0.0])


# --------------------------------------------------------------- bound

def test_bound_deadbeat_noiseless():
    p = StabilityBoundParams(1.0, 2.0, 1.0, 0.0, 3.0)
    assert ms_bound(p, 0) == 6.0
    np.testing.assert_array_equal(ms_bound(p, np.arange(1, 20)), 0.0)


def test_bound_geometric():
    p = StabilityBoundParams(2.0, 2.0, 0.5, 0.0, 1.0)
    k = np.arange(30)
    np.testing.assert_allclose(ms_bound(p, k), 0.5 ** k, rtol=1e-15)


def test_bound_tail_sum():
    p = StabilityBoundParams(1.0, 1.0, 0.1, 1e-4, 0.0)
    direct = 1e-4 * math.fsum(0.9 ** m for m in range(1, 100))
    assert ms_bound(p, 100) == pytest.approx(direct, rel=1e-12)
    assert ms_bound(p, 100) == pytest.approx(9e-4, rel=1e-4)
    assert ms_bound(p, 1) == 0.0


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.01, 1.0), mu=st.floats(0, 1), eps=st.floats(0, 1), k=st.integers(0, 200))
def test_bound_matches_direct_sum(lam, mu, eps, k):
    p = StabilityBoundParams(0.5, 2.0, lam, mu, eps)
    rho = 1 - lam
    direct = 4 * eps * rho ** k + 2 * mu * math.fsum(rho ** m for m in range(1, k))
    assert ms_bound(p, k) == pytest.approx(direct, rel=1e-9, abs=1e-300)


def test_bound_params_validation():
    with pytest.raises(ConfigurationError):
        StabilityBoundParams(2.0, 1.0, 0.5, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        StabilityBoundParams(1.0, 1.0, 0.0, 0.0, 0.0)


def test_decay_fit_examples():
    k = np.arange(60)
    assert estimate_decay_rate(0.5 ** k) == pytest.approx(0.5, abs=1e-6)
    assert estimate_decay_rate(0.9 ** k + 1e-6, floor=1e-6) == pytest.approx(0.1, abs=1e-3)
    with pytest.raises(FitError):
        estimate_decay_rate(np.full(60, 3e-4))


def test_decay_fit_needs_enough_points():
    with pytest.raises(FitError):
        estimate_decay_rate(0.5 ** np.arange(15))
    with pytest.raises(FitError):
        estimate_decay_rate(np.r_[0.5 ** np.arange(10), np.zeros(30)])


# ----------------------------------------------------- quadratic oracle

def test_quadratic_oracle_examples():
    rng = np.random.default_rng(1)
    chk = quadratic_expectation_oracle(np.zeros(3), np.eye(3), np.eye(3), 20_000, rng)
    assert chk.analytic == 3.0 and chk.passed()
    chk = quadratic_expectation_oracle([1.0, 0.0], np.zeros((2, 2)), np.diag([2.0, 3.0]), 1000, rng)
    assert chk.analytic == 2.0 and chk.empirical == 2.0 and chk.std_error == 0.0


def test_quadratic_oracle_rejects_non_psd():
    with pytest.raises(ConfigurationError):
        quadratic_expectation_oracle(np.zeros(2), np.diag([1.0, -1.0]), np.eye(2), 10,
                                     np.random.default_rng(0))


def test_quadratic_oracle_random_triples():
    rng = np.random.default_rng(2718)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        chk = quadratic_expectation_oracle(rng.normal(size=n), random_psd(rng, n),
                                           random_symmetric(rng, n), 200_000, rng)
        assert chk.passed(5.0), chk


# ----------------------------------------------- noiseless optimality

def stacked_cost(lap, h, x0, gains, q, r, qm):
    """Cost of xi' = xi + h Lap u, u = -G_k xi for a batch of gain sequences (S, M, N, N)."""
    xi = np.broadcast_to(x0, (gains.shape[0], x0.size)).copy()
    cost = np.zeros(gains.shape[0])
    for k in range(gains.shape[1]):
        u = -np.einsum("sij,sj->si", gains[:, k], xi)
        cost += q * np.sum(xi * xi, axis=1) + r * np.sum(u * u, axis=1)
        xi = xi + h * u @ lap.T
    return cost + qm * np.sum(xi * xi, axis=1)


def test_global_mode_noiseless_episode_is_optimal():
    horizon, h = 6, 0.1
    topo = Topology.preset("path", 3)
    weights = CostWeights.scalar(1.0, 0.5, 2.0, horizon)
    config = ScenarioConfig(
        n=3, initial_states=(RobotState(0.3, 0.1), RobotState(-0.1, 0.0), RobotState(0.05, -0.2)),
        h=h, noise=NoiseSpec.noiseless(), initial_covariance=0.0, topology=topo, weights=weights,
        gain_mode="global", drive=DriveParams(wheel_speed_limit=100.0), max_steps=horizon,
        stop_on_convergence=False)
    trace = run_episode(config, 0)
    sched = config.schedule()
    lap = np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])
    for ax in (0, 1):
        realized = evaluate_cost(trace, weights, ax)
        x0 = config.true_positions()[:, ax] - config.target[ax]
        assert realized == pytest.approx(x0 @ sched.pi[0] @ x0, rel=1e-10)
        assert realized == pytest.approx(
            stacked_cost(lap, h, x0, np.asarray(sched.gains)[None], 1.0, 0.5, 2.0)[0], rel=1e-10)
        rng = np.random.default_rng(ax)
        scale = np.abs(sched.gains).max()
        random_gains = rng.uniform(-3 * scale, 3 * scale, (1000, horizon, 3, 3))
        assert np.all(stacked_cost(lap, h, x0, random_gains, 1.0, 0.5, 2.0) >= realized - 1e-12)


# ------------------------------------------ Monte Carlo properties (200 runs)

def test_lyapunov_descent_with_floor(mc_low_full):
    mc = mc_low_full
    for ax in analysis.AXES:
        v = np.stack([lyapunov_sequence(t, mc.schedule, ax) for t in mc.traces])
        mu = np.stack([analysis.trace_noise_floor(t, mc.schedule, mc.config.noise, ax) for t in mc.traces])
        dv = np.diff(v, axis=1)
        se = dv.std(axis=0, ddof=1) / math.sqrt(dv.shape[0])
        assert np.all(dv.mean(axis=0) <= mu.mean(axis=0) + 3 * se)


def test_total_error_decomposition(mc_low_full):
    # true error energy = estimated error energy + filter covariance, per step, after the
    # first 20 steps (the initial estimate is exact while the filter still carries P0)
    mc, burn_in = mc_low_full, 20
    for ax in range(2):
        d = np.stack([(t.true_error()[:, :, ax] ** 2).sum(1) - (t.est_error()[:, :, ax] ** 2).sum(1)
                      - t.cov[:, :, ax].sum(1) for t in mc.traces])[:, burn_in:]
        z = d.mean(axis=0) / (d.std(axis=0, ddof=1) / math.sqrt(d.shape[0]))
        # about 0.3% of ~580 correlated steps are expected beyond 3 SE by chance alone
        assert np.mean(np.abs(z) > 3) <= 0.02
        assert np.abs(z).max() <= 4.5


def test_decay_rate_positive_on_noiseless_run(noiseless):
    config = dataclasses.replace(noiseless, stop_on_convergence=False, max_steps=200)
    trace = run_episode(config, 0)
    mse = np.sum(trace.true_error()[:, :, 0] ** 2, axis=1)
    assert estimate_decay_rate(mse[:150]) > 0


# --------------------------------------------------------------- reports

def test_summary_is_json_serializable(low_noise):
    from lqg_rendezvous.sim import run_monte_carlo
    mc = run_monte_carlo(dataclasses.replace(low_noise, monte_carlo_runs=3))
    s = analysis.summarize(mc)
    text = json.dumps(s, allow_nan=False)
    assert json.loads(text)["schema"] == "lqg-rendezvous-summary/1"
    assert len(s["per_step"]["mse_true"]["x"]) == low_noise.max_steps + 1
    for key in ("lyapunov_mean", "noise_floor", "bound"):
        assert set(s["per_step"][key]) == {"x", "y"}
    assert set(s["costs"]["x"]) >= {"realized_mean", "min_cost_expression_mean", "flagged"}


def test_gain_mode_consistency_reports_discrepancy():
    res = analysis.gain_mode_consistency(0.1, CostWeights.scalar(horizon=600))
    assert res["agree"] or res["discrepancy"]
    assert res["contraction_step0"]["local"] == pytest.approx(1 - 2 * 0.1 * 0.9512492197, rel=1e-8)
