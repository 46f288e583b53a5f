"""Per-robot, per-axis linear Kalman filtering with fused position channels.

The plant on each axis is ``x' = x + h*u + w`` so the filter has ``a = 1``
and ``b = h``.  Every channel observes the position directly
(``H = [1, ..., 1]^T``) with independent noise ``R = diag(meas_vars)``.

The scalar ``AxisFilter`` API and the batched simulator share the same
array kernels, ``predict_arrays`` and ``update_arrays``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, SingularInnovationError

_SINGULAR_RTOL = 1e-9


def predict_arrays(est, cov, u, a, b, q):
    est = a * np.asarray(est, dtype=float) + b * np.asarray(u, dtype=float)
    cov = a * a * np.asarray(cov, dtype=float) + q
    return est, cov


def update_arrays(est, cov, z, meas_vars):
    """Fuse channel measurements ``z[..., c]`` into ``est``/``cov``.

    Returns ``(est', cov', gain)`` where ``gain[..., c]`` is the Kalman gain
    row for channel ``c``.
    """
    est = np.asarray(est, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.asarray(meas_vars, dtype=float)
    nu = z - est[..., None]
    if r.min() > 0.0:
        inv_r = 1.0 / r
        info = inv_r.sum(axis=-1)
        gain = (cov / (1.0 + cov * info))[..., None] * inv_r
    else:
        gain = _gain_pinv(cov, np.broadcast_to(r, z.shape), nu)
    kh = gain.sum(axis=-1)
    est_new = est + np.sum(gain * nu, axis=-1)
    cov_new = (1.0 - kh) * cov
    # guards the sign against rounding when kh ~ 1
    cov_new = np.maximum(cov_new, 0.0)
    return est_new, cov_new, np.broadcast_to(gain, z.shape)


def _gain_pinv(cov, r, nu):
    c = r.shape[-1]
    s = cov[..., None, None] * np.ones((c, c)) + r[..., :, None] * np.eye(c)
    s_pinv = np.linalg.pinv(s, hermitian=True)
    # innovations outside range(S) cannot be explained by the model
    resid = np.einsum("...ij,...jk,...k->...i", s, s_pinv, nu) - nu
    scale = np.maximum(np.abs(nu).max(axis=-1, initial=0.0), 1.0)
    if np.any(np.abs(resid).max(axis=-1) > _SINGULAR_RTOL * scale):
        raise SingularInnovationError(
            "innovation covariance is singular and the channel measurements disagree"
        )
    return np.einsum("...,...ij->...j", cov, s_pinv)


@dataclass(frozen=True)
class AxisFilter:
    """Scalar Kalman filter for one axis of one robot."""

    estimate: float
    covariance: float
    process_var: float
    meas_vars: tuple[float, ...]
    b: float
    a: float = 1.0
    last_gain: tuple[float, ...] = ()

    def __post_init__(self):
        if self.covariance < 0 or self.process_var < 0 or any(v < 0 for v in self.meas_vars):
            raise ConfigurationError("AxisFilter: variances must be nonnegative")
        if not self.meas_vars:
            raise ConfigurationError("AxisFilter: at least one measurement channel is required")
        object.__setattr__(self, "meas_vars", tuple(float(v) for v in self.meas_vars))


def kf_predict(f: AxisFilter, u: float, h: float | None = None) -> AxisFilter:
    b = f.b if h is None else h
    est, cov = predict_arrays(f.estimate, f.covariance, u, f.a, b, f.process_var)
    return replace(f, estimate=float(est), covariance=float(cov))


def kf_update(f: AxisFilter, z: Sequence[float] | float) -> AxisFilter:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (len(f.meas_vars),):
        raise ValueError(f"expected {len(f.meas_vars)} channel measurements, got {z.shape}")
    est, cov, gain = update_arrays(f.estimate, f.covariance, z, f.meas_vars)
    return replace(f, estimate=float(est), covariance=float(cov),
                   last_gain=tuple(float(g) for g in gain))


def effective_meas_var(meas_vars) -> float:
    """Variance of the single channel equivalent to fusing ``meas_vars``."""
    meas_vars = np.asarray(meas_vars, dtype=float)
    if np.any(meas_vars == 0.0):
        return 0.0
    return float(1.0 / np.sum(1.0 / meas_vars))


def steady_state_covariance(process_var: float, meas_var_effective: float) -> float:
    """Posterior fixed point of the scalar covariance recursion.

    Solves ``P = (P + q) - (P + q)^2 / (P + q + r)``; the root is written
    as ``2qr / (q + sqrt(q^2 + 4qr))`` to avoid cancellation when ``q << r``.
    """
    q, r = float(process_var), float(meas_var_effective)
    if q < 0 or r <= 0:
        raise ConfigurationError("steady_state_covariance: need q >= 0 and r > 0")
    if q == 0.0:
        return 0.0
    return 2.0 * q * r / (q + math.sqrt(q * q + 4.0 * q * r))


@dataclass(frozen=True)
class GlobalEstimate:
    xs: np.ndarray
    ys: np.ndarray
    covariances: np.ndarray  # (N, 2): P^x, P^y per robot

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        cov = np.asarray(self.covariances, dtype=float).reshape(-1, 2)
        if not (xs.shape == ys.shape == (cov.shape[0],)):
            raise ValueError("GlobalEstimate: inconsistent lengths")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "covariances", cov)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    def axis(self, i: int) -> np.ndarray:
        return self.xs if i == 0 else self.ys


def stack(filters: Sequence[tuple[AxisFilter, AxisFilter]]) -> GlobalEstimate:
    """Order per-robot ``(x_filter, y_filter)`` pairs into stacked vectors."""
    if not filters:
        raise ValueError("stack: need at least one robot")
    xs = [fx.estimate for fx, _ in filters]
    ys = [fy.estimate for _, fy in filters]
    cov = [(fx.covariance, fy.covariance) for fx, fy in filters]
    return GlobalEstimate(np.array(xs), np.array(ys), np.array(cov))
