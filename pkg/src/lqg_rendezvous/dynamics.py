"""Truth propagation, sensor models and differential-drive conversion.

Each robot moves as two decoupled single integrators sampled with a
zero-order hold, ``x' = x + h*ux + wx``.  Heading is not part of the
controlled state; it follows the commanded velocity direction and is only
used to turn planar commands into wheel speeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

HEADING_DEADBAND = 1e-6  # m/s; below this the heading is held


def wrap_angle(a):
    """Map angle(s) into (-pi, pi]; angles already in range are returned unchanged."""
    a = np.asarray(a, dtype=float)
    wrapped = math.pi - np.mod(math.pi - a, 2.0 * math.pi)
    return np.where((a > -math.pi) & (a <= math.pi), a, wrapped)


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))


@dataclass(frozen=True)
class NoiseSpec:
    """Variances (m^2) of process noise per axis and of the two position sensors."""

    process_var_x: float = 1e-8
    process_var_y: float = 1e-8
    meas_var_odom: float = 1e-6
    meas_var_imu: float = 1e-4

    def __post_init__(self):
        for name in ("process_var_x", "process_var_y", "meas_var_odom", "meas_var_imu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ConfigurationError(f"noise.{name} must be a finite variance >= 0, got {v!r}")

    @property
    def meas_vars(self) -> np.ndarray:
        return np.array([self.meas_var_odom, self.meas_var_imu])

    @property
    def process_vars(self) -> np.ndarray:
        return np.array([self.process_var_x, self.process_var_y])

    @classmethod
    def noiseless(cls) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DriveParams:
    wheelbase: float = 0.105  # m
    wheel_speed_limit: float = 0.154  # m/s
    heading_gain: float = 2.0  # 1/s

    def __post_init__(self):
        for name in ("wheelbase", "wheel_speed_limit", "heading_gain"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ConfigurationError(f"drive.{name} must be > 0, got {v!r}")


class Measurement(NamedTuple):
    z_odom_x: float
    z_imu_x: float
    z_odom_y: float
    z_imu_y: float


def step_true_state(state: RobotState, ux, uy, h, wx=0.0, wy=0.0) -> RobotState:
    if h <= 0:
        raise ConfigurationError(f"h must be > 0, got {h!r}")
    theta = state.theta
    if math.hypot(ux, uy) > HEADING_DEADBAND:
        theta = math.atan2(uy, ux)
    return RobotState(state.x + h * ux + wx, state.y + h * uy + wy, theta)


def sample_process_noise(rng: np.random.Generator, spec: NoiseSpec, size=None):
    """Draw ``(wx, wy)``; with ``size`` given, each is an array of that shape."""
    wx = rng.normal(0.0, math.sqrt(spec.process_var_x), size)
    wy = rng.normal(0.0, math.sqrt(spec.process_var_y), size)
    return wx, wy


def measure(state: RobotState, rng: np.random.Generator, spec: NoiseSpec) -> Measurement:
    sd = np.sqrt(spec.meas_vars)
    e = rng.normal(0.0, 1.0, 4)
    return Measurement(
        state.x + sd[0] * e[0],
        state.x + sd[1] * e[1],
        state.y + sd[0] * e[2],
        state.y + sd[1] * e[3],
    )


def measure_all(xy: np.ndarray, rng: np.random.Generator, spec: NoiseSpec) -> np.ndarray:
    """Vectorized ``measure`` for an (N, 2) position array.

    Returns an (N, 2, C) array indexed by robot, axis and channel
    (channel 0 = odometry, 1 = IMU).  Draw order per robot matches
    ``measure``: odom-x, imu-x, odom-y, imu-y.
    """
    n = xy.shape[0]
    e = rng.normal(0.0, 1.0, (n, 2, 2))
    return xy[:, :, None] + np.sqrt(spec.meas_vars) * e


def unicycle_to_wheels(ux, uy, state: RobotState, params: DriveParams):
    """Planar velocity command -> clamped (left, right) wheel speeds."""
    lim = params.wheel_speed_limit
    v = ux * math.cos(state.theta) + uy * math.sin(state.theta)
    v = min(max(v, -lim), lim)
    if math.hypot(ux, uy) > HEADING_DEADBAND:
        omega = params.heading_gain * float(wrap_angle(math.atan2(uy, ux) - state.theta))
    else:
        omega = 0.0
    half = 0.5 * omega * params.wheelbase
    v_l = min(max(v - half, -lim), lim)
    v_r = min(max(v + half, -lim), lim)
    return v_l, v_r


def wheels_batch(u: np.ndarray, theta: np.ndarray, params: DriveParams):
    """Vectorized ``unicycle_to_wheels`` for (..., 2) commands and (...) headings."""
    lim = params.wheel_speed_limit
    ux, uy = u[..., 0], u[..., 1]
    v = np.clip(ux * np.cos(theta) + uy * np.sin(theta), -lim, lim)
    moving = np.hypot(ux, uy) > HEADING_DEADBAND
    omega = np.where(moving, params.heading_gain * wrap_angle(np.arctan2(uy, ux) - theta), 0.0)
    half = 0.5 * omega * params.wheelbase
    return np.clip(v - half, -lim, lim), np.clip(v + half, -lim, lim)
