"""Gradient descent on kernel regression with orthonormal kernel functions.

With orthonormal kernels the basis coefficients are the parameters
themselves, so the kernels never need to be materialized: the loss is
``1/2 ||theta - theta*||^2`` and GD contracts every coordinate by ``1 - eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DIVERGENCE_BOUND, CoefficientTrajectory, TrajectoryRecorder, ceil_count
from .errors import DimensionError, DivergenceError, InputError


@dataclass(frozen=True)
class KRProblem:
    """True coefficients ``theta_star``; the first ``k`` entries are the signals."""

    theta_star: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.theta_star, dtype=np.float64)
        if ts.ndim != 1 or ts.size == 0:
            raise DimensionError("theta_star must be a non-empty vector")
        if not np.all(np.isfinite(ts)):
            raise InputError("theta_star must be finite")
        nz = np.nonzero(ts)[0]
        k = nz.size
        if k and nz[-1] != k - 1:
            raise InputError("nonzero entries of theta_star must come first")
        if np.any(np.diff(np.abs(ts[:k])) > 0):
            raise InputError("signal magnitudes must be non-increasing")
        object.__setattr__(self, "theta_star", ts)

    @classmethod
    def from_signals(cls, signals, d: int) -> "KRProblem":
        signals = np.asarray(signals, dtype=np.float64)
        if signals.size > d:
            raise DimensionError(f"{signals.size} signals do not fit in d={d}")
        theta = np.zeros(d)
        theta[: signals.size] = signals
        return cls(theta)

    @property
    def d(self) -> int:
        return self.theta_star.size

    @property
    def k(self) -> int:
        return int(np.count_nonzero(self.theta_star))


def _check_eta(eta):
    if not (0.0 < eta < 1.0):
        raise InputError(f"eta must lie in (0, 1), got {eta}")


def kr_gd_step(theta, eta: float, problem: KRProblem) -> np.ndarray:
    _check_eta(eta)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != problem.theta_star.shape:
        raise DimensionError("theta and theta_star differ in length")
    return theta - eta * (theta - problem.theta_star)


def kr_closed_form(i: int, t: int, theta0, eta: float, problem: KRProblem) -> float:
    """Coefficient ``i`` after ``t`` steps, without iterating."""
    _check_eta(eta)
    if not (0 <= i < problem.d):
        raise InputError(f"index {i} out of range for d={problem.d}")
    b0 = float(np.asarray(theta0, dtype=np.float64)[i])
    decay = (1.0 - eta) ** t
    if i < problem.k:
        star = float(problem.theta_star[i])
        # convex-combination form; exact at t = 0
        return decay * b0 + (1.0 - decay) * star
    return decay * b0


def kr_simulate(problem: KRProblem, theta0, eta: float, T: int) -> np.ndarray:
    """Full iterate history, shape ``(T + 1, d)``."""
    theta = np.array(theta0, dtype=np.float64)
    out = np.empty((T + 1, problem.d))
    out[0] = theta
    for t in range(1, T + 1):
        theta = kr_gd_step(theta, eta, problem)
        if np.max(np.abs(theta)) > DIVERGENCE_BOUND:
            raise DivergenceError(f"kernel regression diverged at step {t}")
        out[t] = theta
    return out


def run_kr(problem: KRProblem, alpha: float, eta: float, T: int, record_every: int = 1) -> CoefficientTrajectory:
    """GD from ``theta_0 = alpha * 1``.

    Records each signal coefficient and the largest residual magnitude.
    """
    if not alpha > 0:
        raise InputError("alpha must be > 0")
    history = kr_simulate(problem, np.full(problem.d, alpha), eta, T)
    k = problem.k
    labels = [f"beta_{i + 1}" for i in range(k)] + ["residual_max"]
    rec = TrajectoryRecorder(labels, record_every)
    for t, theta in enumerate(history):
        diff = theta - problem.theta_star
        resid = float(np.max(np.abs(theta[k:]))) if k < problem.d else 0.0
        rec.offer(t, np.append(theta[:k], resid), 0.5 * float(diff @ diff), float(np.linalg.norm(diff)))
    return rec.finish()


def kr_gradients(problem: KRProblem) -> np.ndarray:
    """Coefficient gradients; ``beta_i = theta_i`` so row ``i`` is ``e_i``."""
    return np.eye(problem.d)


def theorem2_bound(alpha: float, eta: float, k: int, theta1_abs: float) -> int:
    """Iterations ``ceil((1/eta) * log(k |theta_1*| / alpha))`` with unit constant."""
    if not (alpha > 0 and eta > 0 and k > 0 and theta1_abs > 0):
        raise InputError("alpha, eta, k and theta1_abs must be positive")
    if alpha >= k * theta1_abs:
        raise InputError("alpha must be smaller than k * |theta_1*|")
    return ceil_count(math.log(k * theta1_abs / alpha) / eta)
