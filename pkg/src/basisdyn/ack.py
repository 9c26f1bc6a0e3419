"""After-conjugate-kernel basis: extract from a final snapshot, project any epoch onto it.

A snapshot holds the last linear layer ``W`` (``k x m``) and the feature
map evaluated on ``N`` inputs, ``Psi`` (``m x N``).  With ``Psi = U S V^T``
and ``W~ = W U S / sqrt(N) = sum_i s_i a_i b_i^T``, the functions
``phi_i(x) = a_i b_i^T S^{-1} U^T psi(x) sqrt(N)`` are orthonormal under the
empirical mean ``E[g] = (1/N) sum_n g(x_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError


@dataclass(frozen=True)
class FeatureSnapshot:
    W: np.ndarray
    Psi: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        Psi = np.atleast_2d(np.asarray(self.Psi, dtype=np.float64))
        if W.ndim != 2 or Psi.ndim != 2 or 0 in W.shape or 0 in Psi.shape:
            raise DimensionError("W and Psi must be non-empty matrices")
        if W.shape[1] != Psi.shape[0]:
            raise DimensionError(f"W is {W.shape} but Psi is {Psi.shape}; feature counts differ")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(Psi))):
            raise InputError("snapshot entries must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Psi", Psi)

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def n_samples(self) -> int:
        return self.Psi.shape[1]

    def outputs(self) -> np.ndarray:
        """Model outputs on the ``N`` inputs, ``W Psi`` (``k x N``)."""
        return self.W @ self.Psi


@dataclass(frozen=True)
class AckBasis:
    """Retained right singular vectors of the final features plus the triplets of ``W~``.

    ``left[:, i]`` and ``right[:, i]`` are ``a_i`` and ``b_i``; ``A_i = a_i b_i^T``.
    """

    V_right: np.ndarray
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: int
    normalization: float = field(default=0.0)

    @property
    def rank(self) -> int:
        return self.V_right.shape[1]

    @property
    def size(self) -> int:
        return self.singular_values.size

    def basis_triplets(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        return [(float(s), self.left[:, i].copy(), self.right[:, i].copy()) for i, s in enumerate(self.singular_values)]


def _fix_signs(A, B):
    """Flip each pair so the largest-magnitude entry of ``A[:, i]`` is positive."""
    idx = np.argmax(np.abs(A), axis=0)
    sgn = np.sign(A[idx, np.arange(A.shape[1])])
    sgn[sgn == 0] = 1.0
    return A * sgn, B * sgn


def build_ack_basis(final: FeatureSnapshot, rank_tol: float = 1e-12) -> AckBasis:
    if not rank_tol >= 0:
        raise InputError("rank_tol must be >= 0")
    U, S, Vt = np.linalg.svd(final.Psi, full_matrices=False)
    if S.size == 0 or S[0] == 0.0:
        raise InputError("Psi is all zeros; the basis would be empty")
    keep = S > rank_tol * S[0]
    U, S, V = U[:, keep], S[keep], Vt[keep].T
    N = final.n_samples
    scale = math.sqrt(N)
    W_tilde = final.W @ U * S / scale
    A, s, Bt = np.linalg.svd(W_tilde, full_matrices=False)
    A, B = _fix_signs(A, Bt.T)
    return AckBasis(V, s, A, B, N, scale)


def _normalized(snap: FeatureSnapshot, basis: AckBasis) -> np.ndarray:
    if snap.n_samples != basis.n_samples:
        raise DimensionError(f"snapshot has N={snap.n_samples}, basis expects N={basis.n_samples}")
    if snap.k != basis.left.shape[0]:
        raise DimensionError(f"snapshot has k={snap.k}, basis expects k={basis.left.shape[0]}")
    return snap.W @ snap.Psi @ basis.V_right / basis.normalization


def project_snapshot(snap: FeatureSnapshot, basis: AckBasis) -> np.ndarray:
    """Coefficients ``beta_i = a_i^T W~_t b_i`` with ``W~_t = W_t Psi_t V / sqrt(N)``."""
    Wt = _normalized(snap, basis)
    return np.einsum("ki,kr,ri->i", basis.left, Wt, basis.right)


def projection_remainder(snap: FeatureSnapshot, basis: AckBasis) -> float:
    """``||F - F V V^T||_F`` for the output matrix ``F = W Psi``: the part of the
    epoch's model that lies outside the final feature span."""
    _normalized(snap, basis)
    F = snap.outputs()
    return float(np.linalg.norm(F - (F @ basis.V_right) @ basis.V_right.T))


def basis_functions(basis: AckBasis, final: FeatureSnapshot, features=None) -> np.ndarray:
    """Evaluate every basis function on feature columns (default: the final ``Psi``).

    Returns shape ``(size, k, N')``: ``phi_i(x) = a_i b_i^T S^{-1} U^T psi(x) sqrt(N)``.
    Mostly useful for checking orthonormality under the empirical mean.
    """
    U, S, _ = np.linalg.svd(final.Psi, full_matrices=False)
    U, S = U[:, : basis.rank], S[: basis.rank]
    feats = final.Psi if features is None else np.asarray(features, dtype=np.float64)
    coords = (U.T @ feats) / S[:, None] * basis.normalization
    proj = basis.right.T @ coords  # (size, N')
    return basis.left.T[:, :, None] * proj[:, None, :]


def synth_linear_target(k: int, m: int, N: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """The fixed features ``Psi`` and target ``W*`` behind `synth_linear_trajectory`.

    ``Psi`` is Gaussian, rescaled so the largest eigenvalue of ``Psi Psi^T / N``
    is 1; every step size in (0, 1) is then a descent step.
    """
    if min(k, m, N) < 1:
        raise InputError("k, m, N must be >= 1")
    rng = np.random.default_rng(seed)
    Psi = rng.standard_normal((m, N))
    Psi /= math.sqrt(np.linalg.eigvalsh(Psi @ Psi.T / N)[-1])
    return Psi, rng.standard_normal((k, m))


def synth_linear_trajectory(
    k: int, m: int, N: int, epochs: int, eta: float, seed: int, start: str = "zero"
) -> list[FeatureSnapshot]:
    """Snapshots of GD on ``1/(2N) ||(W - W*) Psi||_F^2`` with fixed random features.

    ``start`` is ``"zero"`` (``W_0 = 0``) or ``"target"`` (``W_0 = W*``).
    """
    if not (0 < eta < 1):
        raise InputError("eta must lie in (0, 1)")
    if epochs < 0:
        raise InputError("epochs must be >= 0")
    Psi, W_star = synth_linear_target(k, m, N, seed)
    H = Psi @ Psi.T / N
    if start == "zero":
        W = np.zeros((k, m))
    elif start == "target":
        W = W_star.copy()
    else:
        raise InputError(f"unknown start {start!r}")
    out = [FeatureSnapshot(W.copy(), Psi, 0)]
    for t in range(1, epochs + 1):
        W = W - eta * (W - W_star) @ H
        out.append(FeatureSnapshot(W.copy(), Psi, t))
    return out


def synthetic_loss(snap: FeatureSnapshot, W_star: np.ndarray) -> float:
    D = (snap.W - W_star) @ snap.Psi
    return 0.5 * float(np.sum(D * D)) / snap.n_samples


def geometric_decay_fit(residuals, floor: float = 1e-9, tail_fraction: float = 0.5) -> tuple[float, float]:
    """Log-linear fit of a decaying residual sequence.

    Keeps the entries above ``floor`` and fits the last ``tail_fraction`` of
    them, where the slowest mode dominates a sum of geometric terms.
    Returns ``(rate, r_squared)`` with residual ``~ C * rate^t``.
    """
    res = np.abs(np.asarray(residuals, dtype=np.float64))
    idx = np.nonzero(res > floor)[0]
    idx = idx[int(len(idx) * (1 - tail_fraction)) :]
    if idx.size < 3:
        raise InputError("fewer than 3 residuals above the floor")
    y = np.log(res[idx])
    slope, intercept = np.polyfit(idx.astype(np.float64), y, 1)
    fitted = intercept + slope * idx
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fitted) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(math.exp(slope)), r2
