"""Finite-horizon Riccati synthesis and the neighbor-difference control law.

Two gain modes are supported:

``local``
    Every robot solves the same scalar problem ``x' = x + h u`` with scalar
    weights, and all robots share the resulting gain ``L_k``.  The control
    applied is ``u_i = -L_k * sum_j a_ij (xhat_i - xhat_j)``.

``global``
    The stacked problem ``xi' = (I_N kron A) xi + (Lap kron B) u`` is solved
    for an N x N gain ``L_k``; robot velocities are ``Lap @ (-L_k xhat)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DriveParams
from .errors import ConfigurationError, SynthesisError
from .estimation import GlobalEstimate
from .graph import Topology, kronecker, laplacian

_PSD_TOL = 1e-9


def _sym(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class CostWeights:
    q_state: np.ndarray
    r_input: np.ndarray
    q_terminal: np.ndarray
    horizon: int

    def __post_init__(self):
        q, r, qm = (np.atleast_2d(np.asarray(m, dtype=float))
                    for m in (self.q_state, self.r_input, self.q_terminal))
        for name, m in (("q_state", q), ("r_input", r), ("q_terminal", qm)):
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise ConfigurationError(f"weights.{name} must be a symmetric square matrix")
        if q.shape != qm.shape:
            raise ConfigurationError("weights: q_state and q_terminal must have the same shape")
        if np.linalg.eigvalsh(q).min() < -_PSD_TOL or np.linalg.eigvalsh(qm).min() < -_PSD_TOL:
            raise ConfigurationError("weights: q_state and q_terminal must be positive semidefinite")
        if np.linalg.eigvalsh(r).min() <= 0.0:
            raise ConfigurationError("weights.r_input must be positive definite")
        if int(self.horizon) < 1:
            raise ConfigurationError("weights.horizon must be >= 1")
        object.__setattr__(self, "q_state", q)
        object.__setattr__(self, "r_input", r)
        object.__setattr__(self, "q_terminal", qm)
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def scalar(cls, q_state=1.0, r_input=1.0, q_terminal=1.0, horizon=600) -> "CostWeights":
        return cls(np.array([[q_state]]), np.array([[r_input]]), np.array([[q_terminal]]), horizon)

    def expanded(self, n: int) -> "CostWeights":
        """Scalar weights -> ``w * I_n`` for the stacked problem."""
        if self.q_state.shape != (1, 1) or self.r_input.shape != (1, 1):
            raise ConfigurationError("weights.expanded: weights are not scalar")
        eye = np.eye(n)
        return CostWeights(self.q_state[0, 0] * eye, self.r_input[0, 0] * eye,
                           self.q_terminal[0, 0] * eye, self.horizon)

    def scaled(self, c: float) -> "CostWeights":
        return CostWeights(c * self.q_state, c * self.r_input, c * self.q_terminal, self.horizon)


@dataclass(frozen=True)
class GainSchedule:
    """Cost-to-go matrices and feedback gains indexed by step.

    ``pi[k]`` is Pi_k for k = 0..M and ``gains[k]`` is L_k for k = 0..M-1.
    Past the horizon the step-0 gain is held (it is the one furthest from
    the terminal boundary, i.e. the closest to stationary).
    """

    pi: np.ndarray  # (M+1, n, n)
    gains: np.ndarray  # (M, m, n)

    def __post_init__(self):
        if self.pi.shape[0] != self.gains.shape[0] + 1:
            raise ValueError("GainSchedule: need |pi| = |gains| + 1")
        self.pi.setflags(write=False)
        self.gains.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def gain_at(self, k: int) -> np.ndarray:
        return self.gains[k] if 0 <= k < self.horizon else self.gains[0]

    def pi_at(self, k: int) -> np.ndarray:
        return self.pi[k] if 0 <= k <= self.horizon else self.pi[0]

    @property
    def is_scalar(self) -> bool:
        return self.gains.shape[1:] == (1, 1)


def riccati_backward(weights: CostWeights, a_global, b_global) -> GainSchedule:
    a = np.atleast_2d(np.asarray(a_global, dtype=float))
    b = np.atleast_2d(np.asarray(b_global, dtype=float))
    n, m = b.shape
    if a.shape != (n, n) or weights.q_state.shape != (n, n) or weights.r_input.shape != (m, m):
        raise ConfigurationError(
            f"riccati_backward: inconsistent shapes A{a.shape} B{b.shape} "
            f"Q{weights.q_state.shape} R{weights.r_input.shape}")
    big_m = weights.horizon
    pi = np.empty((big_m + 1, n, n))
    gains = np.empty((big_m, m, n))
    pi[big_m] = weights.q_terminal
    q, r = weights.q_state, weights.r_input
    for k in range(big_m - 1, -1, -1):
        p_next = pi[k + 1]
        bt_p = b.T @ p_next
        s = r + bt_p @ b
        try:
            lk = np.linalg.solve(s, bt_p @ a)
        except np.linalg.LinAlgError as exc:
            raise SynthesisError(f"singular R + B^T Pi B at step {k}") from exc
        acl = a - b @ lk
        gains[k] = lk
        pi[k] = _sym(acl.T @ p_next @ acl + lk.T @ r @ lk + q)
    return GainSchedule(pi, gains)


def local_riccati(weights: CostWeights, h: float) -> GainSchedule:
    """Scalar per-robot recursion with ``a = 1``, ``b = h``."""
    if weights.q_state.shape != (1, 1):
        raise ConfigurationError("local_riccati: weights must be scalar")
    return riccati_backward(weights, np.array([[1.0]]), np.array([[float(h)]]))


def global_system(topology: Topology, h: float, k: int = 0):
    """Stacked ``(I_N kron A, Lap kron B)`` for the scalar integrator."""
    a_glob = kronecker(np.eye(topology.n), [[1.0]])
    b_glob = kronecker(laplacian(topology, k), [[float(h)]])
    return a_glob, b_glob


def synthesize(mode: str, weights: CostWeights, h: float, topology: Topology) -> GainSchedule:
    if mode == "local":
        return local_riccati(weights, h)
    if mode == "global":
        a_glob, b_glob = global_system(topology, h)
        return riccati_backward(weights.expanded(topology.n), a_glob, b_glob)
    raise ConfigurationError(f"gain_mode must be 'local' or 'global', got {mode!r}")


def neighbor_sum(values: np.ndarray, lap: np.ndarray) -> np.ndarray:
    """``sum_j a_ij (v_i - v_j)`` over the last axis of ``values``.

    Same as ``Lap @ v`` in exact arithmetic, but written as differences so
    that equal values give exactly zero for any edge weights.
    """
    adj = -lap * (1.0 - np.eye(lap.shape[0]))
    diff = values[..., :, None] - values[..., None, :]
    return np.sum(adj * diff, axis=-1)


def control_axis(xhat: np.ndarray, lap: np.ndarray, gain) -> tuple[np.ndarray, np.ndarray]:
    """One axis of the control law over the last axis of ``xhat``.

    Returns ``(decision, velocity)``: the input of the synthesized problem
    and the resulting robot velocity.  They coincide in local mode.
    """
    g = np.asarray(gain, dtype=float)
    if g.size == 1:
        v = -float(g.reshape(())) * neighbor_sum(xhat, lap)
        return v, v
    decision = -(xhat @ g.T)
    return decision, neighbor_sum(decision, lap)


def distributed_control(est: GlobalEstimate, topology: Topology, gain, k: int = 0) -> np.ndarray:
    """Per-robot planar velocity commands, shape (N, 2)."""
    lap = laplacian(topology, k)
    ux = control_axis(est.xs, lap, gain)[1]
    uy = control_axis(est.ys, lap, gain)[1]
    return np.column_stack([ux, uy])


def saturate_inputs(u, params: DriveParams) -> np.ndarray:
    """Scale each row's planar speed down to the wheel-speed limit, keeping direction."""
    u = np.array(u, dtype=float)
    speed = np.hypot(u[..., 0], u[..., 1])
    lim = params.wheel_speed_limit
    scale = np.where(speed > lim, lim / np.where(speed > 0, speed, 1.0), 1.0)
    return u * scale[..., None]
