"""Closed-loop episode execution and Monte Carlo batches.

Per step ``k`` every robot, synchronously:

1. measures its position on both channels,
2. predicts with the previously applied velocity (skipped at ``k = 0``,
   where the initial estimate is the prior) and fuses the measurements,
3. stops if all pairwise estimate gaps are within ``epsilon``,
4. looks up ``L_k``, exchanges estimates with neighbors and forms the
   neighbor-difference command,
5. saturates it, converts it to wheel speeds and integrates the truth with
   fresh process noise.

Noise is drawn in a fixed order (measurements, then process noise) from a
single generator per episode, so a trace is a pure function of
``(config, episode_seed)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics
from .control import CostWeights, GainSchedule, control_axis, saturate_inputs, synthesize
from .dynamics import DriveParams, NoiseSpec, RobotState
from .errors import ConfigurationError, EpisodeError
from .estimation import GlobalEstimate, predict_arrays, update_arrays
from .graph import Topology, is_connected, laplacian


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    initial_states: tuple[RobotState, ...]
    h: float = 0.1
    initial_estimates: Optional[np.ndarray] = None  # (N, 2); defaults to true positions
    initial_covariance: float = 1e-6
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    topology: Optional[Topology] = None  # defaults to the complete graph
    weights: Optional[CostWeights] = None  # scalar; defaults to 1, 1, 1 over max_steps
    gain_mode: str = "local"
    drive: DriveParams = field(default_factory=DriveParams)
    epsilon: float = 0.005
    max_steps: int = 600
    master_seed: int = 0
    monte_carlo_runs: int = 200
    stop_on_convergence: bool = True
    target: Optional[tuple[float, float]] = None  # defaults to the initial centroid
    name: str = "custom"

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 2:
            raise ConfigurationError(f"n must be an integer >= 2, got {n!r}")
        states = tuple(s if isinstance(s, RobotState) else RobotState(*s) for s in self.initial_states)
        if len(states) != n:
            raise ConfigurationError(f"initial_states: expected {n} entries, got {len(states)}")
        object.__setattr__(self, "initial_states", states)
        if not self.h > 0:
            raise ConfigurationError(f"h must be > 0, got {self.h!r}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon!r}")
        if int(self.max_steps) < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps!r}")
        if int(self.monte_carlo_runs) < 1:
            raise ConfigurationError("monte_carlo_runs must be >= 1")
        if not self.initial_covariance >= 0:
            raise ConfigurationError("initial_covariance must be >= 0")
        if self.gain_mode not in ("local", "global"):
            raise ConfigurationError(f"gain_mode must be 'local' or 'global', got {self.gain_mode!r}")
        est0 = self.initial_estimates
        est0 = self.true_positions() if est0 is None else np.array(est0, dtype=float)
        if est0.shape != (n, 2):
            raise ConfigurationError(f"initial_estimates: expected shape ({n}, 2), got {est0.shape}")
        est0.setflags(write=False)
        object.__setattr__(self, "initial_estimates", est0)
        topo = self.topology if self.topology is not None else Topology.preset("complete", n)
        if topo.n != n:
            raise ConfigurationError(f"topology has {topo.n} nodes but n={n}")
        object.__setattr__(self, "topology", topo)
        w = self.weights if self.weights is not None else CostWeights.scalar(horizon=self.max_steps)
        if w.q_state.shape != (1, 1):
            raise ConfigurationError("weights must be scalar per robot and axis")
        object.__setattr__(self, "weights", w)
        if self.target is None:
            c = self.true_positions().mean(axis=0)
            object.__setattr__(self, "target", (float(c[0]), float(c[1])))

    def true_positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.initial_states], dtype=float)

    def schedule(self) -> GainSchedule:
        return synthesize(self.gain_mode, self.weights, self.h, self.topology)


@dataclass
class EpisodeTrace:
    """Per-step record arrays; index 0 is the initial step.

    Shapes use T = record count, N = robots, C = sensor channels:
    ``truth`` (T, N, 3) as x, y, theta; ``est``/``cov``/``control``/
    ``velocity`` (T, N, 2) by axis; ``gain``/``innovation`` (T, N, 2, C);
    ``wheels`` (T, N, 2) as (v_l, v_r).  ``control`` is the input of the
    synthesized problem; ``velocity`` is what the robot actually applied.
    Inputs on the final record are zero (the loop has stopped).
    """

    h: float
    target: np.ndarray
    truth: np.ndarray
    est: np.ndarray
    cov: np.ndarray
    gain: np.ndarray
    innovation: np.ndarray
    control: np.ndarray
    velocity: np.ndarray
    wheels: np.ndarray
    terminated_at: int
    converged_at: Optional[int]
    seed: int
    warnings: list = field(default_factory=list)

    @property
    def n_records(self) -> int:
        return self.truth.shape[0]

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def true_error(self) -> np.ndarray:
        """(T, N, 2) true position minus rendezvous target."""
        return self.truth[:, :, :2] - self.target

    def est_error(self) -> np.ndarray:
        return self.est - self.target


def check_convergence(estimates: GlobalEstimate, epsilon: float) -> bool:
    if estimates.n < 2:
        raise ValueError("check_convergence: need at least two robots")
    gap_x = estimates.xs.max() - estimates.xs.min()
    gap_y = estimates.ys.max() - estimates.ys.min()
    return bool(gap_x <= epsilon and gap_y <= epsilon)


def _spread_ok(est: np.ndarray, epsilon: float) -> np.ndarray:
    """Convergence test over the robot axis of (..., N, 2) estimates."""
    gaps = est.max(axis=-2) - est.min(axis=-2)
    return np.all(gaps <= epsilon, axis=-1)


def run_episode(config: ScenarioConfig, episode_seed: int,
                schedule: Optional[GainSchedule] = None) -> EpisodeTrace:
    return simulate(config, [episode_seed], schedule)[0]


def simulate(config: ScenarioConfig, seeds, schedule: Optional[GainSchedule] = None) -> list:
    """Run one episode per seed in lockstep and return their traces.

    Episodes only share the (immutable) config and gain schedule; each draws
    from its own generator, so a trace does not depend on which other seeds
    were batched with it.
    """
    if schedule is None:
        schedule = config.schedule()
    seeds = [int(s) for s in seeds]
    rngs = [np.random.default_rng(s) for s in seeds]
    runs, n, h = len(seeds), config.n, config.h
    noise, drive = config.noise, config.drive
    n_ch = noise.meas_vars.shape[0]
    cap = config.max_steps + 1

    truth = np.empty((runs, cap, n, 3))
    est = np.empty((runs, cap, n, 2))
    cov = np.empty((runs, cap, n, 2))
    gain = np.empty((runs, cap, n, 2, n_ch))
    innov = np.empty((runs, cap, n, 2, n_ch))
    control = np.zeros((runs, cap, n, 2))
    velocity = np.zeros((runs, cap, n, 2))
    wheels = np.zeros((runs, cap, n, 2))

    notes = []
    if not is_connected(config.topology):
        notes.append("topology is not connected; rendezvous is not guaranteed")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=3)

    state = np.broadcast_to(
        np.array([[s.x, s.y, s.theta] for s in config.initial_states], dtype=float), (runs, n, 3)).copy()
    x_hat = np.broadcast_to(config.initial_estimates, (runs, n, 2)).copy()
    p_cov = np.full((runs, n, 2), float(config.initial_covariance))
    q, r = noise.process_vars, noise.meas_vars
    u_prev = np.zeros((runs, n, 2))
    terminated = np.full(runs, -1)
    converged = np.full(runs, -1)
    act = np.arange(runs)

    for k in range(cap):
        truth[act, k] = state[act]
        z = np.stack([dynamics.measure_all(state[i, :, :2], rngs[i], noise) for i in act])
        xa, pa = x_hat[act], p_cov[act]
        if k > 0:
            xa, pa = predict_arrays(xa, pa, u_prev[act], 1.0, h, q)
        innov[act, k] = z - xa[..., None]
        xa, pa, ka = update_arrays(xa, pa, z, r)
        x_hat[act], p_cov[act] = xa, pa
        est[act, k], cov[act, k], gain[act, k] = xa, pa, ka

        done = _spread_ok(xa, config.epsilon)
        converged[act[done & (converged[act] < 0)]] = k
        stop = done if config.stop_on_convergence else np.zeros_like(done)
        if k == config.max_steps:
            stop = np.ones_like(done)
        terminated[act[stop]] = k
        act, xa = act[~stop], xa[~stop]
        if act.size == 0:
            break

        lap = laplacian(config.topology, k)
        lk = schedule.gain_at(k)
        for ax in range(2):
            control[act, k, :, ax], velocity[act, k, :, ax] = control_axis(xa[..., ax], lap, lk)
        v = saturate_inputs(velocity[act, k], drive)
        velocity[act, k] = v
        st = state[act]
        vl, vr = dynamics.wheels_batch(v, st[..., 2], drive)
        wheels[act, k, :, 0], wheels[act, k, :, 1] = vl, vr

        w = np.stack([np.column_stack(dynamics.sample_process_noise(rngs[i], noise, n)) for i in act])
        st[..., :2] += h * v + w
        moving = np.hypot(v[..., 0], v[..., 1]) > dynamics.HEADING_DEADBAND
        st[..., 2] = np.where(moving, np.arctan2(v[..., 1], v[..., 0]), st[..., 2])
        state[act] = st
        u_prev[act] = v

    target = np.array(config.target, dtype=float)
    traces = []
    for i in range(runs):
        t = terminated[i] + 1
        traces.append(EpisodeTrace(
            h=h, target=target,
            truth=truth[i, :t].copy(), est=est[i, :t].copy(), cov=cov[i, :t].copy(),
            gain=gain[i, :t].copy(), innovation=innov[i, :t].copy(),
            control=control[i, :t].copy(), velocity=velocity[i, :t].copy(), wheels=wheels[i, :t].copy(),
            terminated_at=int(terminated[i]),
            converged_at=None if converged[i] < 0 else int(converged[i]),
            seed=seeds[i], warnings=list(notes),
        ))
    return traces


def episode_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index``: 128 bits drawn from
    ``SeedSequence(master_seed, spawn_key=(run_index,))``."""
    words = np.random.SeedSequence(int(master_seed), spawn_key=(int(run_index),)).generate_state(2, np.uint64)
    return (int(words[0]) << 64) | int(words[1])


def pad_to(a: np.ndarray, length: int) -> np.ndarray:
    """Extend a per-step array to ``length`` records by holding its last record."""
    if a.shape[0] >= length:
        return a[:length]
    tail = np.repeat(a[-1:], length - a.shape[0], axis=0)
    return np.concatenate([a, tail], axis=0)


def mean_over_runs(a: np.ndarray) -> np.ndarray:
    """Mean along axis 0 using numpy's pairwise summation (runs on the fast axis)."""
    moved = np.ascontiguousarray(np.moveaxis(a, 0, -1))
    return moved.sum(axis=-1) / a.shape[0]


@dataclass
class MonteCarloResult:
    """Per-step batch statistics; every per-step array has one row per step
    ``0..max_steps`` and one column per axis.  Traces that stopped early are
    held at their final record."""

    config: ScenarioConfig
    schedule: GainSchedule
    traces: list
    mse_true: np.ndarray
    mse_true_se: np.ndarray
    mse_est: np.ndarray
    mse_est_se: np.ndarray
    cov_trace: np.ndarray
    active: np.ndarray
    convergence_steps: np.ndarray  # -1 for runs that never converged
    terminal_positions: np.ndarray  # (R, N, 2)

    @property
    def runs(self) -> int:
        return len(self.traces)

    def terminal_mse(self) -> float:
        """Mean over runs of the true rendezvous error energy (both axes) at each run's last record."""
        err = self.terminal_positions - self.traces[0].target
        return float(mean_over_runs(np.sum(err ** 2, axis=(1, 2))))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.convergence_steps >= 0))


def _locate_failure(config, seeds, schedule):
    # rerun one by one so the failing seed can be reported
    for r, seed in enumerate(seeds):
        try:
            simulate(config, [seed], schedule)
        except Exception as exc:
            raise EpisodeError(r, seed, exc) from exc
    raise RuntimeError("batched run failed but every episode succeeds on its own")


def _mean_se(per_run: np.ndarray):
    r = per_run.shape[0]
    mean = mean_over_runs(per_run)
    if r < 2:
        return mean, np.zeros_like(mean)
    var = mean_over_runs((per_run - mean) ** 2) * r / (r - 1)
    return mean, np.sqrt(var / r)


def run_monte_carlo(config: ScenarioConfig, runs: Optional[int] = None) -> MonteCarloResult:
    runs = config.monte_carlo_runs if runs is None else int(runs)
    if runs < 1:
        raise ConfigurationError("monte_carlo_runs must be >= 1")
    schedule = config.schedule()
    length = config.max_steps + 1
    seeds = [episode_seed(config.master_seed, r) for r in range(runs)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            traces = simulate(config, seeds, schedule)
        except Exception:
            traces = _locate_failure(config, seeds, schedule)

    true_e = np.stack([pad_to(tr.true_error(), length) for tr in traces])  # (R, T, N, 2)
    est_e = np.stack([pad_to(tr.est_error(), length) for tr in traces])
    covs = np.stack([pad_to(tr.cov, length) for tr in traces])
    mse_true, mse_true_se = _mean_se(np.sum(true_e ** 2, axis=2))
    mse_est, mse_est_se = _mean_se(np.sum(est_e ** 2, axis=2))
    cov_trace = mean_over_runs(np.sum(covs, axis=2))
    term = np.array([tr.terminated_at for tr in traces])
    active = (term[None, :] >= np.arange(length)[:, None]).sum(axis=1)
    conv = np.array([-1 if tr.converged_at is None else tr.converged_at for tr in traces])
    terminal = np.stack([tr.truth[-1, :, :2] for tr in traces])
    return MonteCarloResult(config, schedule, traces, mse_true, mse_true_se, mse_est, mse_est_se,
                            cov_trace, active, conv, terminal)
