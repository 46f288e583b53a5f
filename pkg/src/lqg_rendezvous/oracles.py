"""Independent reference computations used by ``verify`` and the test-suite.

None of these call the Riccati recursion or the closed-form steady state
they are used to check.
"""
from __future__ import annotations

import math

import numpy as np

from .estimation import predict_arrays, update_arrays


def iterate_covariance(q, r, p0=0.0, h: float = 0.1, tol: float = 1e-11,
                       max_iter: int = 1_000_000):
    """Run the filter's predict/update kernels until the covariance settles.

    ``q`` and ``r`` are arrays (one single-channel filter per entry).  An
    entry stops once its remaining distance to the limit, estimated from
    the geometric decay of successive changes, is below ``tol``.  Returns
    ``(P, iterations)`` with per-entry iteration counts.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    r = np.broadcast_to(np.asarray(r, dtype=float), q.shape)
    p = np.broadcast_to(np.asarray(p0, dtype=float), q.shape).astype(float)
    iters = np.zeros(q.shape, dtype=int)
    idx = np.arange(q.size)
    cur, qa, ra = p.copy(), q.copy(), r[:, None].copy()
    prev_step = np.full(q.size, np.nan)
    for it in range(1, max_iter + 1):
        zero = np.zeros_like(cur)
        _, pred = predict_arrays(zero, cur, 0.0, 1.0, h, qa)
        _, new, _ = update_arrays(zero, pred, zero[:, None], ra)
        step = new - cur
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.clip(step / prev_step, 0.0, 1.0 - 1e-15)
            remaining = np.abs(step) * rho / (1.0 - rho)
        done = (step == 0.0) | (remaining < tol) & (np.abs(step) < tol)
        cur, prev_step = new, step
        if done.any():
            p[idx[done]] = cur[done]
            iters[idx[done]] = it
            keep = ~done
            idx, cur, qa, ra, prev_step = idx[keep], cur[keep], qa[keep], ra[keep], prev_step[keep]
            if idx.size == 0:
                break
    p[idx] = cur
    iters[idx] = max_iter
    return p, iters


def lq_min_cost(a, b, q, r, qm, x0, horizon: int) -> tuple[float, np.ndarray]:
    """Minimum of the scalar deterministic LQ cost by direct least squares.

    The state is linear in the input sequence, ``x = F x0 + G u``, so the
    cost is ``||W (F x0 + G u)||^2 + r ||u||^2`` and is minimized with
    ``lstsq`` over the stacked residual.
    """
    m = int(horizon)
    f = np.array([a ** k for k in range(m + 1)], dtype=float)
    g = np.zeros((m + 1, m))
    for k in range(1, m + 1):
        for j in range(k):
            g[k, j] = a ** (k - 1 - j) * b
    w = np.sqrt(np.array([q] * m + [qm], dtype=float))
    lhs = np.vstack([w[:, None] * g, math.sqrt(r) * np.eye(m)])
    rhs = -np.concatenate([w * f * x0, np.zeros(m)])
    u, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    res = lhs @ u - rhs
    return float(res @ res), u


def closed_loop_cost(a, b, q, r, qm, x0, gains) -> np.ndarray:
    """Cost of ``u_k = -L_k x_k`` for each row of ``gains`` (shape (S, M))."""
    gains = np.atleast_2d(np.asarray(gains, dtype=float))
    x = np.full(gains.shape[0], float(x0))
    cost = np.zeros(gains.shape[0])
    for k in range(gains.shape[1]):
        u = -gains[:, k] * x
        cost += q * x * x + r * u * u
        x = a * x + b * u
    return cost + qm * x * x


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    f = rng.normal(size=(n, n if rank is None else rank))
    return f @ f.T


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    s = rng.normal(size=(n, n))
    return 0.5 * (s + s.T)
