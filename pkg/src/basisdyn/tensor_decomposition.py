"""Gradient descent on orthogonal symmetric tensor decomposition.

Model ``T_U = sum_i u_i^{(x)l}`` against ``T* = sum_j sigma_j z_j^{(x)l}``.
Production code never forms an order-``l`` tensor: every inner product goes
through ``<a^{(x)l}, b^{(x)l}> = <a, b>^l``.  Coefficients are indexed by
multi-indices ``Lambda = (j_1, ..., j_l)`` (0-based here) and expressed
through ``v_ij = <u_i, z_j>``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .core import DIVERGENCE_BOUND, CoefficientTrajectory, TrajectoryRecorder
from .errors import DimensionError, DivergenceError, FeasibilityError, InputError
from .matrix_factorization import pad_sigma, random_orthonormal

ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class OSTDProblem:
    Z: np.ndarray
    sigma: np.ndarray
    r_over: int
    order_l: int

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=np.float64)
        d = Z.shape[0]
        if Z.shape != (d, d) or np.max(np.abs(Z.T @ Z - np.eye(d))) > 1e-12:
            raise InputError("Z must be a square orthonormal matrix")
        sigma = pad_sigma(self.sigma, d)
        if np.any(np.diff(sigma) > 0) or np.any(sigma < 0):
            raise InputError("sigma must be non-negative and non-increasing")
        if self.order_l < 3:
            raise InputError("tensor order must be >= 3")
        r = int(np.count_nonzero(sigma))
        if self.r_over < max(r, 1):
            raise InputError("need r <= r_over and r_over >= 1")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def random(cls, d: int, sigma, r_over: int, order_l: int, seed: int) -> "OSTDProblem":
        rng = np.random.default_rng([seed, 0])
        return cls(random_orthonormal(d, rng), pad_sigma(sigma, d), r_over, order_l)

    @property
    def d(self) -> int:
        return self.Z.shape[0]

    @property
    def r(self) -> int:
        return int(np.count_nonzero(self.sigma))

    @property
    def kappa(self) -> float:
        return float(self.sigma[0] / self.sigma[self.r - 1]) if self.r else math.nan


@dataclass(frozen=True)
class OSTDState:
    U: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class VMatrix:
    """``V[i, j] = <u_i, z_j>`` (shape ``r' x d``) and its largest off-diagonal magnitude."""

    V: np.ndarray
    offdiag_max: float

    @classmethod
    def from_array(cls, V) -> "VMatrix":
        V = np.asarray(V, dtype=np.float64)
        mask = np.ones(V.shape, dtype=bool)
        k = min(V.shape)
        mask[np.arange(k), np.arange(k)] = False
        off = float(np.max(np.abs(V[mask]))) if mask.any() else 0.0
        return cls(V, off)

    def diag(self) -> np.ndarray:
        return np.diagonal(self.V).copy()


@dataclass(frozen=True)
class MultiIndex:
    """Length-``l`` tuple of 0-based basis indices."""

    Lambda: tuple

    def __post_init__(self):
        object.__setattr__(self, "Lambda", tuple(int(j) for j in self.Lambda))

    def counts(self, d: int) -> np.ndarray:
        c = np.bincount(np.asarray(self.Lambda, dtype=np.int64), minlength=d)
        if c.size != d:
            raise InputError(f"multi-index {self.Lambda} has entries outside [0, {d})")
        return c

    @property
    def is_diagonal(self) -> bool:
        return len(set(self.Lambda)) == 1


# --------------------------------------------------------------------------
# Loss and gradient
# --------------------------------------------------------------------------


def ostd_loss(state: OSTDState, problem: OSTDProblem) -> float:
    """``1/2 ||T_U - T*||_F^2`` through the Gram identity."""
    U, l = state.U, problem.order_l
    G = U.T @ U
    P = problem.Z.T @ U  # P[j, i] = v_ij
    s = problem.sigma
    value = float(np.sum(G**l)) - 2.0 * float(np.sum(s[:, None] * P**l)) + float(s @ s)
    return 0.5 * value


def ostd_tensor_error(state: OSTDState, problem: OSTDProblem) -> float:
    """Squared Frobenius distance ``||T_U - T*||_F^2`` (twice the loss), clamped at 0."""
    return max(2.0 * ostd_loss(state, problem), 0.0)


def ostd_gradient(state: OSTDState, problem: OSTDProblem) -> np.ndarray:
    """Column ``i``: ``l (sum_j <u_i,u_j>^{l-1} u_j - sum_j sigma_j <u_i,z_j>^{l-1} z_j)``."""
    U, l, Z = state.U, problem.order_l, problem.Z
    G = U.T @ U
    P = Z.T @ U
    return l * (U @ G ** (l - 1) - Z @ (problem.sigma[:, None] * P ** (l - 1)))


def ostd_gd_step(state: OSTDState, problem: OSTDProblem, eta: float) -> OSTDState:
    if not eta > 0:
        raise InputError("eta must be > 0")
    U_next = state.U - eta * ostd_gradient(state, problem)
    if not np.all(np.abs(U_next) <= DIVERGENCE_BOUND):
        raise DivergenceError(f"tensor decomposition diverged at step {state.iteration + 1}")
    return OSTDState(U_next, state.iteration + 1)


# --------------------------------------------------------------------------
# Coefficients
# --------------------------------------------------------------------------


def v_matrix(state: OSTDState, problem: OSTDProblem) -> VMatrix:
    return VMatrix.from_array(state.U.T @ problem.Z)


def beta_lambda(V: VMatrix, Lambda: MultiIndex) -> float:
    """``beta_Lambda = sum_i prod_k v_{i, Lambda_k}``."""
    cols = V.V[:, list(Lambda.Lambda)]
    return float(np.sum(np.prod(cols, axis=1)))


def _check_budget(d, l):
    if d**l > ENUMERATION_BUDGET:
        raise FeasibilityError(f"d^l = {d}^{l} exceeds the enumeration budget {ENUMERATION_BUDGET}")


def all_betas(V: VMatrix, order_l: int) -> np.ndarray:
    """Every coefficient as an order-``l`` array, ``beta[j1, ..., jl]``."""
    rp, d = V.V.shape
    _check_budget(d, order_l)
    acc = V.V
    for _ in range(order_l - 1):
        acc = (acc[..., None] * V.V.reshape((rp,) + (1,) * (acc.ndim - 1) + (d,)))
    return acc.sum(axis=0)


def beta_star_tensor(problem: OSTDProblem) -> np.ndarray:
    d, l = problem.d, problem.order_l
    _check_budget(d, l)
    out = np.zeros((d,) * l)
    idx = np.arange(d)
    out[(idx,) * l] = problem.sigma
    return out


def _multi_index_counts(d, l):
    """All ``d^l`` ordered multi-indices (row-major) and their count vectors."""
    tuples = np.array(list(itertools.product(range(d), repeat=l)), dtype=np.int64)
    counts = np.zeros((tuples.shape[0], d), dtype=np.int64)
    for pos in range(l):
        np.add.at(counts, (np.arange(tuples.shape[0]), tuples[:, pos]), 1)
    return tuples, counts


def v_step_reference(V: VMatrix, problem: OSTDProblem, eta: float) -> VMatrix:
    """One GD step of ``v_ij`` by literal enumeration over multi-indices.

    Independent of `ostd_gradient`: the update is assembled term by term as

        v_ij + eta l (sigma_j - v_jj^l) v_ij^{l-1}
             - eta l sum_{k != j} v_kj^l v_ij^{l-1}
             - eta sum_{s=1}^{l-1} s sum_{|Lambda|_j = s}
                   beta_Lambda prod_{k != j} v_ik^{|Lambda|_k} v_ij^{s-1}
    """
    d, l = problem.d, problem.order_l
    _check_budget(d, l)
    Vm = V.V
    rp = Vm.shape[0]
    if Vm.shape[1] != d:
        raise DimensionError("V does not match the problem dimension")
    _, counts = _multi_index_counts(d, l)
    # beta_Lambda for every multi-index: sum_i prod_k v_ik^{c_k}
    betas = np.array([np.sum(np.prod(Vm ** c[None, :], axis=1)) for c in counts])
    sigma = problem.sigma
    out = np.empty_like(Vm)
    for j in range(d):
        mixed = (counts[:, j] >= 1) & (counts[:, j] <= l - 1)
        c_mixed = counts[mixed]
        s_mixed = c_mixed[:, j]
        b_mixed = betas[mixed]
        reduced = c_mixed.copy()
        reduced[:, j] -= 1  # exponent of v_ij drops by one under d/dv_ij
        col_pow = np.sum(Vm[:, j] ** l)
        for i in range(rp):
            v_ij = Vm[i, j]
            v_jj_l = Vm[j, j] ** l if j < rp else 0.0
            others = col_pow - v_jj_l
            term_diag = eta * l * (sigma[j] - v_jj_l) * v_ij ** (l - 1)
            term_cols = -eta * l * others * v_ij ** (l - 1)
            prods = np.prod(Vm[i][None, :] ** reduced, axis=1)
            term_mixed = -eta * float(np.sum(s_mixed * b_mixed * prods))
            out[i, j] = v_ij + term_diag + term_cols + term_mixed
    return VMatrix.from_array(out)


def signal_coefficients(V: VMatrix, problem: OSTDProblem) -> np.ndarray:
    """Diagonal coefficients ``beta_{Lambda_i} = sum_j v_ji^l`` for the signals."""
    return np.sum(V.V[:, : problem.r] ** problem.order_l, axis=0)


def signal_gradient_norms(V: VMatrix, problem: OSTDProblem) -> np.ndarray:
    """``||grad_U beta_{Lambda_i}||_F = l sqrt(sum_j v_ji^{2(l-1)})`` for the signals."""
    l = problem.order_l
    return l * np.sqrt(np.sum(V.V[:, : problem.r] ** (2 * (l - 1)), axis=0))


def ostd_coefficient_gradients(U: np.ndarray, problem: OSTDProblem) -> np.ndarray:
    """Flattened ``grad_U beta_Lambda`` for every multi-index, shape ``(d^l, d*r')``."""
    d, l, Z = problem.d, problem.order_l, problem.Z
    _check_budget(d, l)
    Vm = U.T @ Z
    tuples, _ = _multi_index_counts(d, l)
    out = np.zeros((tuples.shape[0], d, U.shape[1]))
    for n, lam in enumerate(tuples):
        for pos in range(l):
            rest = np.prod(Vm[:, np.delete(lam, pos)], axis=1)  # over columns u_i
            out[n] += np.outer(Z[:, lam[pos]], rest)
    return out.reshape(tuples.shape[0], -1)


def ostd_beta_vector(U: np.ndarray, problem: OSTDProblem) -> np.ndarray:
    return all_betas(VMatrix.from_array(U.T @ problem.Z), problem.order_l).ravel()


# --------------------------------------------------------------------------
# Initialization
# --------------------------------------------------------------------------


def ostd_aligned_init(problem: OSTDProblem, alpha: float, gamma_align: float, seed: int) -> OSTDState:
    """Columns of norm ``alpha^(1/l)`` at angle exactly ``arcsin(gamma_align)`` from ``z_i``.

    Columns beyond ``d`` (``r' > d``) have no partner eigenvector and are
    drawn uniformly on the sphere of the same radius.
    """
    if not alpha > 0:
        raise InputError("alpha must be > 0")
    if not (0.0 <= gamma_align < 1.0):
        raise InputError("gamma_align must lie in [0, 1)")
    d, rp, Z = problem.d, problem.r_over, problem.Z
    if d == 1 and gamma_align > 0:
        raise InputError("d = 1 leaves no direction orthogonal to z_1")
    rng = np.random.default_rng([seed, 1])
    radius = alpha ** (1.0 / problem.order_l)
    U = np.empty((d, rp))
    c = math.sqrt(1.0 - gamma_align**2)
    for i in range(rp):
        w = rng.standard_normal(d)
        if i < d:
            z = Z[:, i]
            w -= (w @ z) * z
            w /= np.linalg.norm(w) if d > 1 else 1.0
            U[:, i] = radius * (c * z + gamma_align * w) if d > 1 else radius * z
        else:
            U[:, i] = radius * w / np.linalg.norm(w)
    return OSTDState(U, 0)


# --------------------------------------------------------------------------
# Monitors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lemma5Status:
    diag_bound_ok: bool
    offdiag_bound_ok: bool
    status: str  # "checked" or "skipped"


def lemma5_bounds_check(
    V: VMatrix, problem: OSTDProblem, n_samples: int = 2000, seed: int = 0
) -> Lemma5Status:
    """Coefficient bounds in terms of the largest off-diagonal ``|v_ij|``.

    Diagonal: ``|beta_{Lambda_j} - v_jj^l| <= r' V^l`` for every ``j``.
    Mixed: ``|beta_Lambda| <= 2 r sigma_1^{(l-1)/l} V`` for every multi-index
    with two distinct entries; all of them when ``d^l`` is within budget,
    otherwise ``n_samples`` random ones.  Skipped (both flags False) unless
    ``max_{j>=r} |v_jj|^l <= sigma_1^{(l-1)/l} V`` and
    ``V <= sigma_1^{1/l} d^{-1/(l-1)}``.
    """
    Vm, Vmax = V.V, V.offdiag_max
    d, l, r = problem.d, problem.order_l, problem.r
    rp = Vm.shape[0]
    s1 = problem.sigma[0]
    diag = np.zeros(d)
    k = min(rp, d)
    diag[:k] = np.diagonal(Vm)[:k]
    resid = np.abs(diag[r:]) ** l
    pre_ok = (resid.max(initial=0.0) <= s1 ** ((l - 1) / l) * Vmax) and (
        Vmax <= s1 ** (1 / l) * d ** (-1 / (l - 1))
    )
    if not pre_ok:
        return Lemma5Status(False, False, "skipped")
    beta_diag = np.sum(Vm**l, axis=0)
    diag_ok = bool(np.all(np.abs(beta_diag - diag**l) <= rp * Vmax**l * (1 + 1e-12) + 1e-300))
    bound = 2 * r * s1 ** ((l - 1) / l) * Vmax
    if d**l <= ENUMERATION_BUDGET:
        betas = all_betas(V, l)
        idx = np.arange(d)
        mixed_mask = np.ones(betas.shape, dtype=bool)
        mixed_mask[(idx,) * l] = False
        mixed_vals = np.abs(betas[mixed_mask])
    else:
        rng = np.random.default_rng(seed)
        lams = rng.integers(0, d, size=(n_samples, l))
        lams = lams[np.any(lams != lams[:, :1], axis=1)]
        mixed_vals = np.abs(np.array([np.sum(np.prod(Vm[:, lam], axis=1)) for lam in lams]))
    off_ok = bool(np.all(mixed_vals <= bound * (1 + 1e-12)))
    return Lemma5Status(diag_ok, off_ok, "checked")


@dataclass(frozen=True)
class Prop7Status:
    signal_ok: bool
    diag_residual_ok: bool
    offdiag_ok: bool
    applicable: bool

    @property
    def all_ok(self) -> bool:
        return self.signal_ok and self.diag_residual_ok and self.offdiag_ok


def prop7_preconditions(V: VMatrix, problem: OSTDProblem, eta: float) -> bool:
    """Unit-constant versions of the one-step monitor's hypotheses."""
    d, l = problem.d, problem.order_l
    s1 = problem.sigma[0]
    return bool(
        V.offdiag_max <= s1 ** (1 / l) * d ** (-1 / (l - 1))
        and np.all(V.diag() <= s1 ** (1 / l) * (1 + 1e-12))
        and eta <= 1.0 / (l * s1)
    )


def prop7_step_monitor(V: VMatrix, V_next: VMatrix, problem: OSTDProblem, eta: float) -> Prop7Status:
    """Check the three one-step inequalities between consecutive ``V`` matrices.

    Returns ``applicable=False`` (and all flags False) when the hypotheses
    fail, so an unmet precondition is never reported as a violated bound.
    """
    if not prop7_preconditions(V, problem, eta):
        return Prop7Status(False, False, False, False)
    d, l, r = problem.d, problem.order_l, problem.r
    s1 = problem.sigma[0]
    Vmax = V.offdiag_max
    v, v_next = V.diag(), V_next.diag()
    k = v.size
    tol = 1e-12
    cross = l * d**l * eta * s1 ** ((l - 1) / l) * Vmax**l

    vs = v[: min(r, k)]
    lower = vs + eta * l * (problem.sigma[: vs.size] - vs**l - 2 * d ** (l - 1) * vs ** (l - 2) * Vmax**2) * vs ** (l - 1) - cross
    signal_ok = bool(np.all(v_next[: vs.size] >= lower - tol * (1 + np.abs(lower))))

    vr, vr_next = v[r:k], v_next[r:k]
    sgn = np.where(vr >= 0, 1.0, -1.0)  # mirrored bound for negative entries
    upper = sgn * vr - eta * l * np.abs(vr) ** (2 * l - 1) + 2 * cross
    resid_ok = bool(np.all(sgn * vr_next <= upper + tol * (1 + np.abs(upper))))

    off_bound = Vmax + 3 * eta * l * s1 * Vmax ** (l - 1)
    off_ok = bool(V_next.offdiag_max <= off_bound + tol * (1 + off_bound))
    return Prop7Status(signal_ok, resid_ok, off_ok, True)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


def iterate_ostd(problem: OSTDProblem, state: OSTDState, eta: float, T: int) -> Iterator[OSTDState]:
    yield state
    for _ in range(T):
        state = ostd_gd_step(state, problem, eta)
        yield state


def ostd_labels(problem: OSTDProblem) -> list[str]:
    return [f"beta_L{i + 1}" for i in range(problem.r)] + ["offdiag_max", "diag_residual_max"]


def run_ostd(
    problem: OSTDProblem,
    alpha: float,
    gamma_align: float,
    eta: float,
    T: int,
    seed: int,
    record_every: int = 1,
    observer: Optional[Callable[[OSTDState, VMatrix], None]] = None,
) -> CoefficientTrajectory:
    """GD from an aligned initial point.

    Columns: diagonal signal coefficients, ``V(t)``, and the largest residual
    diagonal ``|v_jj|``.  The error column is ``||T_U - T*||_F``.
    """
    if not (alpha > 0 and eta > 0 and T >= 0):
        raise InputError("alpha and eta must be positive, T non-negative")
    r = problem.r
    rec = TrajectoryRecorder(ostd_labels(problem), record_every)
    state0 = ostd_aligned_init(problem, alpha, gamma_align, seed)
    for state in iterate_ostd(problem, state0, eta, T):
        V = v_matrix(state, problem)
        diag = V.diag()
        resid = float(np.max(np.abs(diag[r:]))) if diag.size > r else 0.0
        loss = ostd_loss(state, problem)
        row = np.concatenate([signal_coefficients(V, problem), [V.offdiag_max, resid]])
        rec.offer(state.iteration, row, max(loss, 0.0), math.sqrt(max(2.0 * loss, 0.0)))
        if observer is not None:
            observer(state, V)
    return rec.finish()
