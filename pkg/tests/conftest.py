import dataclasses

import numpy as np
import pytest

from lqg_rendezvous.config import load_scenario
from lqg_rendezvous.dynamics import NoiseSpec
from lqg_rendezvous.sim import EpisodeTrace, run_monte_carlo


def make_trace(est, control=None, target=(0.0, 0.0), cov=None):
    """Minimal EpisodeTrace around hand-written estimates of shape (T, N, 2)."""
    est = np.asarray(est, dtype=float)
    t, n, _ = est.shape
    control = np.zeros_like(est) if control is None else np.asarray(control, dtype=float)
    cov = np.zeros_like(est) if cov is None else np.asarray(cov, dtype=float)
    truth = np.concatenate([est, np.zeros((t, n, 1))], axis=2)
    return EpisodeTrace(
        h=0.1, target=np.asarray(target, dtype=float), truth=truth, est=est, cov=cov,
        gain=np.zeros((t, n, 2, 2)), innovation=np.zeros((t, n, 2, 2)),
        control=control, velocity=control.copy(), wheels=np.zeros((t, n, 2)),
        terminated_at=t - 1, converged_at=None, seed=0)


@pytest.fixture(scope="session")
def low_noise():
    return load_scenario("paper-sec5-low-noise")


@pytest.fixture(scope="session")
def high_noise():
    return load_scenario("paper-sec5-high-noise")


@pytest.fixture(scope="session")
def noiseless(low_noise):
    return dataclasses.replace(low_noise, noise=NoiseSpec.noiseless(), initial_covariance=0.0)


@pytest.fixture(scope="session")
def mc_low_full(low_noise):
    """200 low-noise runs over the whole horizon (no early stop)."""
    return run_monte_carlo(dataclasses.replace(low_noise, stop_on_convergence=False))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
