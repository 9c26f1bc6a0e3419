"""Gradient descent on symmetric matrix factorization ``U U^T ~= M*``.

The ground truth is ``M* = Z diag(sigma) Z^T``.  Basis coefficients are
``beta_ij(U) = <z_i z_j^T, U U^T>``, collected in the coefficient matrix
``B = Z^T U U^T Z``.  The loss convention is ``1/4 ||U U^T - M*||_F^2``,
whose gradient is ``(U U^T - M*) U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .core import DIVERGENCE_BOUND, CoefficientTrajectory, TrajectoryRecorder
from .errors import DimensionError, DivergenceError, InputError, UndefinedRatioError


def random_orthonormal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal ``d x d`` matrix (QR with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def pad_sigma(sigma, d: int) -> np.ndarray:
    s = np.zeros(d)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size > d:
        raise DimensionError(f"{sigma.size} eigenvalues do not fit in d={d}")
    s[: sigma.size] = sigma
    return s


@dataclass(frozen=True)
class SMFProblem:
    Z: np.ndarray
    sigma: np.ndarray
    r_over: int

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=np.float64)
        d = Z.shape[0]
        if Z.shape != (d, d):
            raise DimensionError("Z must be square")
        if np.max(np.abs(Z.T @ Z - np.eye(d))) > 1e-12:
            raise InputError("Z must be orthonormal")
        sigma = pad_sigma(self.sigma, d)
        if np.any(np.diff(sigma) > 0) or np.any(sigma < 0):
            raise InputError("sigma must be non-negative and non-increasing")
        r = int(np.count_nonzero(sigma))
        # r = 0 is allowed: a pure-decay problem with M* = 0
        if r and np.any(np.diff(np.append(sigma[:r], 0.0)) >= 0):
            raise InputError("nonzero eigenvalues must be distinct (eigengap > 0)")
        if self.r_over < r:
            raise InputError(f"r_over={self.r_over} is below the true rank {r}")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def random(cls, d: int, sigma, r_over: int, seed: int) -> "SMFProblem":
        rng = np.random.default_rng([seed, 0])
        return cls(random_orthonormal(d, rng), pad_sigma(sigma, d), r_over)

    @property
    def d(self) -> int:
        return self.Z.shape[0]

    @property
    def r(self) -> int:
        return int(np.count_nonzero(self.sigma))

    @property
    def eigengap(self) -> float:
        """``min_{i<=r} (sigma_i - sigma_{i+1})``; NaN when ``r = 0``."""
        if self.r == 0:
            return math.nan
        s = np.append(self.sigma, 0.0)
        return float(np.min(s[: self.r] - s[1 : self.r + 1]))

    @property
    def kappa(self) -> float:
        return float(self.sigma[0] / self.sigma[self.r - 1]) if self.r else math.nan

    @property
    def M_star(self) -> np.ndarray:
        return (self.Z * self.sigma) @ self.Z.T

    @property
    def beta_star(self) -> np.ndarray:
        return np.diag(self.sigma)


@dataclass(frozen=True)
class SMFState:
    U: np.ndarray
    iteration: int = 0


def smf_init_gaussian(problem: SMFProblem, alpha: float, seed: int) -> SMFState:
    """``U_0`` with iid ``N(0, alpha^2)`` entries."""
    if not alpha > 0:
        raise InputError("alpha must be > 0")
    rng = np.random.default_rng([seed, 1])
    return SMFState(alpha * rng.standard_normal((problem.d, problem.r_over)), 0)


def smf_coefficients(state: SMFState, problem: SMFProblem) -> np.ndarray:
    U = state.U
    if U.shape[0] != problem.d:
        raise DimensionError("U has the wrong number of rows")
    W = problem.Z.T @ U
    return W @ W.T


def smf_init_check(state: SMFState, problem: SMFProblem, alpha: float) -> tuple[bool, bool]:
    """High-probability bounds on the coefficients of a Gaussian initial point.

    signal_ok: ``beta_ii >= r' alpha^2 / 4`` for the ``r`` signal indices.
    residual_ok: ``|beta_ij| <= 4 log(d) r' alpha^2`` whenever ``i != j``
    or both indices are residual.
    """
    B = smf_coefficients(state, problem)
    r, rp, d = problem.r, problem.r_over, problem.d
    signal_ok = bool(np.all(np.diag(B)[:r] >= rp * alpha**2 / 4))
    mask = ~np.eye(d, dtype=bool)
    mask[r:, r:] = True
    residual_ok = bool(np.all(np.abs(B[mask]) <= 4 * math.log(d) * rp * alpha**2))
    return signal_ok, residual_ok


def smf_gradient(U: np.ndarray, problem: SMFProblem) -> np.ndarray:
    return (U @ U.T - problem.M_star) @ U


def smf_loss(U: np.ndarray, problem: SMFProblem) -> float:
    E = U @ U.T - problem.M_star
    return 0.25 * float(np.sum(E * E))


def smf_gd_step(state: SMFState, problem: SMFProblem, eta: float) -> SMFState:
    if not eta > 0:
        raise InputError("eta must be > 0")
    U = state.U
    U_next = U - eta * smf_gradient(U, problem)
    if not np.all(np.abs(U_next) <= DIVERGENCE_BOUND):
        raise DivergenceError(f"matrix factorization diverged at step {state.iteration + 1}")
    return SMFState(U_next, state.iteration + 1)


def _check_symmetric(B):
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DimensionError("coefficient matrix must be square")
    if np.max(np.abs(B - B.T)) > 1e-12 * (1.0 + np.max(np.abs(B))):
        raise InputError("coefficient matrix is not symmetric")
    return B


def smf_coefficient_step(B, problem: SMFProblem, eta: float) -> np.ndarray:
    """One GD step carried out entirely in coefficient space.

    Matrix form of the exact coefficient recurrence: with ``D = B - S`` and
    ``S = diag(sigma)``, ``B+ = B - eta (D B + B D) + eta^2 D B D``.
    """
    B = _check_symmetric(B)
    if B.shape[0] != problem.d:
        raise DimensionError("coefficient matrix does not match the problem dimension")
    D = B - np.diag(problem.sigma)
    DB = D @ B
    return B - eta * (DB + DB.T) + eta**2 * (DB @ D)


def smf_reconstruction_error(state: SMFState, problem: SMFProblem) -> float:
    """``||U U^T - M*||_F``."""
    return float(np.linalg.norm(state.U @ state.U.T - problem.M_star))


def smf_omega_ratio(B) -> float:
    """``beta_12^2 / beta_22``, the coupling of the two leading directions."""
    B = np.asarray(B, dtype=np.float64)
    if B[1, 1] <= 0:
        raise UndefinedRatioError("beta_22 must be > 0")
    return float(B[0, 1] ** 2 / B[1, 1])


def smf_coefficient_gradients(U: np.ndarray, problem: SMFProblem) -> np.ndarray:
    """Rows ``grad_U beta_ij = (z_i z_j^T + z_j z_i^T) U``, flattened; ``(d*d, d*r')``."""
    Z = problem.Z
    W = Z.T @ U  # row j is z_j^T U
    d = problem.d
    # grad beta_ij = z_i (z_j^T U) + z_j (z_i^T U)
    G = np.einsum("ai,jb->ijab", Z, W)  # z_i[a] * W[j, b]
    G = G + G.transpose(1, 0, 2, 3)
    return G.reshape(d * d, -1)


def smf_beta_vector(U: np.ndarray, problem: SMFProblem) -> np.ndarray:
    W = problem.Z.T @ U
    return (W @ W.T).ravel()


def iterate_smf(problem: SMFProblem, state: SMFState, eta: float, T: int) -> Iterator[SMFState]:
    """Yield the initial state and each of the next ``T`` GD iterates."""
    yield state
    for _ in range(T):
        state = smf_gd_step(state, problem, eta)
        yield state


def smf_labels(problem: SMFProblem) -> list[str]:
    return [f"beta_{i + 1}{i + 1}" for i in range(problem.r)] + ["offdiag_max", "residual_max"]


def smf_row(B: np.ndarray, problem: SMFProblem) -> np.ndarray:
    r = problem.r
    off = B - np.diag(np.diag(B))
    resid = np.abs(B[r:, r:]).max() if r < problem.d else 0.0
    return np.concatenate([np.diag(B)[:r], [np.abs(off).max(), resid]])


def run_smf(
    problem: SMFProblem,
    alpha: float,
    eta: float,
    T: int,
    seed: int,
    record_every: int = 1,
    observer: Optional[Callable[[SMFState, np.ndarray], None]] = None,
) -> CoefficientTrajectory:
    """GD from a small Gaussian initial point.

    Columns: each signal ``beta_ii``, the largest off-diagonal ``|beta_ij|``
    and the largest ``|beta_ij|`` inside the residual block.  ``observer``
    is called with every visited state and its coefficient matrix.
    """
    if not (alpha > 0 and eta > 0 and T >= 0):
        raise InputError("alpha and eta must be positive, T non-negative")
    S = np.diag(problem.sigma)
    M = problem.M_star
    rec = TrajectoryRecorder(smf_labels(problem), record_every)
    for state in iterate_smf(problem, smf_init_gaussian(problem, alpha, seed), eta, T):
        U = state.U
        P = U @ U.T
        B = problem.Z.T @ P @ problem.Z
        B = 0.5 * (B + B.T)
        loss = 0.25 * float(np.sum((B - S) ** 2))
        rec.offer(state.iteration, smf_row(B, problem), loss, float(np.linalg.norm(P - M)))
        if observer is not None:
            observer(state, B)
    return rec.finish()


def mc_expected_loss_smf(
    state: SMFState, problem: SMFProblem, n_samples: int, seed: int, chunk: int = 20000
) -> tuple[float, float]:
    """Monte Carlo mean of ``1/4 <U U^T - M*, X>^2`` over standard-normal ``X``.

    Returns ``(estimate, standard_error)``.
    """
    if n_samples < 2:
        raise InputError("n_samples must be >= 2")
    A = (state.U @ state.U.T - problem.M_star).ravel()
    rng = np.random.default_rng(seed)
    n_done, mean, m2 = 0, 0.0, 0.0
    while n_done < n_samples:
        m = min(chunk, n_samples - n_done)
        q = 0.25 * (rng.standard_normal((m, A.size)) @ A) ** 2
        c_mean = float(q.mean())
        c_m2 = float(np.sum((q - c_mean) ** 2))
        # Chan et al. pairwise merge of running mean / M2
        n_new = n_done + m
        delta = c_mean - mean
        mean += delta * m / n_new
        m2 += c_m2 + delta**2 * n_done * m / n_new
        n_done = n_new
    var = m2 / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)
