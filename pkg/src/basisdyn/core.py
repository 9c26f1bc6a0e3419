"""Trajectory container and the model-agnostic diagnostics.

Everything here works on basis coefficients ``beta_i(theta)`` and their
gradients, independently of which model produced them.  The model modules
(`kernel_regression`, `matrix_factorization`, `tensor_decomposition`) feed
their trajectories through these helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateFitError, DimensionError, InputError

# Shared by every GD runner: any iterate entry beyond this is a divergence.
DIVERGENCE_BOUND = 1e12


def ceil_count(x: float) -> int:
    """Ceiling that forgives floating-point noise on exact integers.

    ``1 / (1e-4 * 0.01)`` evaluates to ``1000000.0000000001``; a plain ceiling
    would report one iteration too many.
    """
    if not math.isfinite(x):
        raise InputError(f"iteration count is not finite: {x}")
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def _as_finite_vector(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------


@dataclass
class CoefficientTrajectory:
    """Recorded basis coefficients of one GD run.

    ``coefficients[n, i]`` is the value of column ``labels[i]`` at iteration
    ``steps[n]``.  ``loss`` and ``error`` are recorded alongside.
    """

    steps: np.ndarray
    coefficients: np.ndarray
    loss: np.ndarray
    error: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        self.loss = np.asarray(self.loss, dtype=np.float64)
        self.error = np.asarray(self.error, dtype=np.float64)
        self.labels = list(self.labels)
        self.validate()

    def validate(self):
        n = len(self.steps)
        if self.coefficients.ndim != 2 or self.coefficients.shape != (n, len(self.labels)):
            raise DimensionError(
                f"coefficients shape {self.coefficients.shape} does not match "
                f"{n} steps x {len(self.labels)} labels"
            )
        if self.loss.shape != (n,) or self.error.shape != (n,):
            raise DimensionError("loss and error need one entry per step")
        if n > 1 and np.any(np.diff(self.steps) <= 0):
            raise InputError("steps must be strictly increasing")
        for name, col in (("loss", self.loss), ("error", self.error)):
            if not np.all(np.isfinite(col)) or np.any(col < 0):
                raise InputError(f"{name} entries must be finite and non-negative")

    def __len__(self):
        return len(self.steps)

    def column(self, label: str) -> np.ndarray:
        return self.coefficients[:, self.labels.index(label)]

    @property
    def final_loss(self) -> float:
        return float(self.loss[-1])

    @property
    def final_error(self) -> float:
        return float(self.error[-1])


class TrajectoryRecorder:
    """Accumulates rows for a `CoefficientTrajectory` with optional thinning.

    Every ``record_every``-th step is stored; step 0 and the last step handed
    to `finish` are always stored.
    """

    def __init__(self, labels: Sequence[str], record_every: int = 1):
        if record_every < 1:
            raise InputError("record_every must be >= 1")
        self.labels = list(labels)
        self.record_every = int(record_every)
        self._rows: list[tuple[int, np.ndarray, float, float]] = []
        self._pending = None

    def offer(self, step: int, coefficients, loss: float, error: float):
        row = (int(step), np.array(coefficients, dtype=np.float64), float(loss), float(error))
        if step == 0 or step % self.record_every == 0:
            self._rows.append(row)
            self._pending = None
        else:
            self._pending = row

    def finish(self) -> CoefficientTrajectory:
        rows = list(self._rows)
        if self._pending is not None:
            rows.append(self._pending)
        if not rows:
            raise InputError("no steps were recorded")
        return CoefficientTrajectory(
            steps=[r[0] for r in rows],
            coefficients=np.vstack([r[1] for r in rows]),
            loss=[r[2] for r in rows],
            error=[r[3] for r in rows],
            labels=self.labels,
        )


# --------------------------------------------------------------------------
# Loss decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LossDecomposition:
    optimization_error: float
    approximation_error: float
    noise: float
    total: float


def decomposed_loss(beta, beta_star, approx_err: float = 0.0, noise_var: float = 0.0) -> LossDecomposition:
    """Split the expected squared loss into optimization, approximation and noise parts."""
    beta = _as_finite_vector(beta, "beta")
    beta_star = _as_finite_vector(beta_star, "beta_star")
    if beta.shape != beta_star.shape:
        raise DimensionError(f"beta has {beta.size} entries, beta_star has {beta_star.size}")
    for name, v in (("approx_err", approx_err), ("noise_var", noise_var)):
        if not math.isfinite(v):
            raise InputError(f"{name} must be finite")
        if v < 0:
            raise InputError(f"{name} must be non-negative")
    opt = 0.5 * float(np.sum((beta - beta_star) ** 2))
    noise = noise_var / 2.0
    approx = float(approx_err)
    return LossDecomposition(opt, approx, noise, opt + approx + noise)


# --------------------------------------------------------------------------
# Gradient diagnostics
# --------------------------------------------------------------------------


def gradient_independence_score(gradients, norm_floor: float = 1e-12) -> tuple[float, int]:
    """Largest ``|cos|`` between coefficient gradients, over pairs above the norm floor.

    Returns ``(score, skipped_pairs)``; pairs where either gradient norm is
    below ``norm_floor`` are skipped and counted rather than treated as
    errors.
    """
    g = np.asarray(gradients, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 2:
        raise InputError("need a matrix with at least two gradient rows")
    norms = np.linalg.norm(g, axis=1)
    ok = norms >= norm_floor
    n = g.shape[0]
    n_ok = int(ok.sum())
    skipped = n * (n - 1) // 2 - n_ok * (n_ok - 1) // 2
    if n_ok < 2:
        return 0.0, skipped
    unit = g[ok] / norms[ok, None]
    cos = unit @ unit.T
    iu = np.triu_indices(n_ok, k=1)
    score = float(np.max(np.abs(cos[iu])))
    return min(score, 1.0), skipped


@dataclass(frozen=True)
class DominanceFit:
    """Power-law fit ``||grad beta|| ~= C * |beta| ** gamma_exponent``."""

    C: float
    gamma_exponent: float
    r_squared: float
    sample_count: int


def dominance_fit(samples) -> DominanceFit:
    """Ordinary least squares of log-gradient-norm on log-coefficient.

    ``samples`` is a sequence of ``(|beta|, ||grad beta||)`` pairs, all
    strictly positive.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("samples must be (|beta|, ||grad beta||) pairs")
    if arr.shape[0] < 2:
        raise InputError("dominance_fit needs at least 2 samples")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InputError("all samples must be finite and strictly positive")
    x = np.log(arr[:, 0])
    y = np.log(arr[:, 1])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-300 or np.ptp(x) == 0:
        raise DegenerateFitError("all |beta| samples are identical")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(resid @ resid)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DominanceFit(C=math.exp(intercept), gamma_exponent=slope, r_squared=r2, sample_count=arr.shape[0])


def init_condition_check(beta0, signal_set, alpha: float, C1: float, C2: float) -> tuple[bool, bool]:
    """Signal lower bound and energy upper bound at the initial point.

    signals_ok: ``beta0[i] >= C1 * alpha`` for every ``i`` in ``signal_set``.
    energy_ok: ``||beta0||_2 <= C2 * alpha``.
    """
    beta0 = _as_finite_vector(beta0, "beta0")
    idx = list(signal_set)
    if not idx:
        raise InputError("signal_set is empty")
    if min(idx) < 0 or max(idx) >= beta0.size:
        raise InputError("signal_set index out of range")
    signals_ok = bool(np.all(beta0[idx] >= C1 * alpha))
    energy_ok = bool(np.linalg.norm(beta0) <= C2 * alpha)
    return signals_ok, energy_ok


def crossing_times(traj: CoefficientTrajectory, targets, fraction: float) -> list[Optional[int]]:
    """First recorded step at which each coefficient reaches ``fraction * target``.

    "Reaches" is measured along the sign of the target: ``sign(t) * beta >=
    fraction * |t|``.

    Columns whose target is zero or NaN, or which never cross, map to None.
    """
    if not (0.0 < fraction <= 1.0):
        raise InputError("fraction must lie in (0, 1]")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (traj.coefficients.shape[1],):
        raise DimensionError(
            f"{targets.size} targets for {traj.coefficients.shape[1]} coefficient columns"
        )
    out: list[Optional[int]] = []
    for i, target in enumerate(targets):
        if not np.isfinite(target) or target == 0.0:
            out.append(None)
            continue
        # sign-aware, so negative targets are approached from above
        hit = np.nonzero(math.copysign(1.0, target) * traj.coefficients[:, i] >= fraction * abs(target))[0]
        out.append(int(traj.steps[hit[0]]) if hit.size else None)
    return out


# --------------------------------------------------------------------------
# Theorem-level bound calculators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Theorem1Inputs:
    """Constants entering the general convergence bound.

    ``L_f``, ``L_g``, ``L_H`` bound the model, its gradient and Hessian;
    ``C1``/``C2`` are the initialization constants; ``C`` and
    ``gamma_exponent`` parametrize gradient dominance.
    """

    C: float
    gamma_exponent: float
    alpha: float
    beta_k_star: float
    basis_size_d: int
    L_f: float = 1.0
    L_g: float = 1.0
    L_H: float = 1.0
    C1: float = 1.0
    C2: float = 1.0

    def __post_init__(self):
        for name in ("C", "alpha", "beta_k_star", "L_f", "L_g", "L_H", "C1", "C2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"{name} must be finite and > 0, got {v}")
        if self.basis_size_d < 1:
            raise InputError("basis_size_d must be >= 1")
        if not (0.5 <= self.gamma_exponent <= 1.0):
            raise InputError("gamma_exponent must lie in [1/2, 1]")


def theorem1_bounds(inp: Theorem1Inputs, eta: Optional[float] = None) -> tuple[float, int]:
    """Step-size ceiling and iteration count of the general convergence theorem.

    All implied constants are 1.  Logarithms are floored at 1 so that a
    log argument near 1 does not blow the step size up.  ``eta`` defaults to
    the returned ``eta_max``.
    """
    g = inp.gamma_exponent
    log_d = max(math.log(inp.basis_size_d * inp.beta_k_star / (inp.C1 * inp.alpha)), 1.0)
    eta_max = (inp.alpha ** (2 * g) * inp.beta_k_star ** (2 * g)) / (
        math.sqrt(inp.basis_size_d) * inp.C**2 * inp.L_H * inp.L_g**2 * inp.L_f**2 * log_d
    )
    step = eta_max if eta is None else float(eta)
    if not step > 0:
        raise InputError("eta must be > 0")
    if g == 0.5:
        log_t = max(math.log(inp.beta_k_star / (inp.C1 * inp.alpha)), 1.0)
        T = ceil_count(log_t / (inp.C**2 * step * inp.beta_k_star))
    else:
        T = ceil_count(1.0 / (inp.C**2 * step * inp.beta_k_star * inp.alpha ** (2 * g - 1)))
    return eta_max, T


def prop1_residual_check(
    theta,
    eta: float,
    beta_fn: Callable[[np.ndarray], np.ndarray],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    beta_star,
) -> float:
    """Second-order remainder of the linearized coefficient update.

    Takes one step of the coefficient-space GD dynamic
    ``theta+ = theta - eta * sum_j (beta_j - beta_j*) grad beta_j`` (exact GD
    on ``1/2 sum (beta - beta*)^2``) and returns the max deviation of
    ``beta(theta+)`` from the first-order prediction
    ``beta - eta * G G^T (beta - beta*)``.  ``grad_fn`` returns one flattened
    gradient per row.  The remainder is O(eta^2); callers compare two step
    sizes to confirm the order.
    """
    theta = np.asarray(theta, dtype=np.float64)
    beta = np.asarray(beta_fn(theta), dtype=np.float64)
    beta_star = np.asarray(beta_star, dtype=np.float64)
    G = np.asarray(grad_fn(theta), dtype=np.float64)
    if beta.shape != beta_star.shape or G.shape != (beta.size, theta.size):
        raise DimensionError("beta_fn, grad_fn and beta_star disagree in dimension")
    delta = beta - beta_star
    theta_next = theta - eta * (G.T @ delta).reshape(theta.shape)
    predicted = beta - eta * (G @ (G.T @ delta))
    return float(np.max(np.abs(np.asarray(beta_fn(theta_next)) - predicted)))
