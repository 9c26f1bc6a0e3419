"""Scalar logistic-map reference dynamics for a single signal coefficient.

``x_{t+1} = (1 + eta*sigma - eta*x_t) x_t`` grows geometrically while small
and settles at the fixed point ``sigma``.  The bounds below use natural
logarithms, unit constants and ceilings on every iteration count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ceil_count
from .errors import InputError


@dataclass(frozen=True)
class LogisticConfig:
    sigma: float
    eta: float
    alpha: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.eta > 0):
            raise InputError("sigma and eta must be > 0")
        if not (0 <= self.alpha <= self.sigma):
            raise InputError("need 0 <= alpha <= sigma")
        if not self.eta * self.sigma < 1:
            raise InputError("need eta * sigma < 1")


def logistic_iterate(cfg: LogisticConfig, T: int) -> np.ndarray:
    """The sequence ``x_0, ..., x_T`` with ``x_0 = alpha``."""
    if T < 0:
        raise InputError("T must be >= 0")
    x = np.empty(T + 1)
    x[0] = cfg.alpha
    a = 1.0 + cfg.eta * cfg.sigma
    for t in range(T):
        x[t + 1] = (a - cfg.eta * x[t]) * x[t]
    return x


def first_passage(cfg: LogisticConfig, level: float, max_iters: int) -> int | None:
    """Smallest ``t`` with ``x_t >= level``, or None within ``max_iters``."""
    hit = np.nonzero(logistic_iterate(cfg, max_iters) >= level)[0]
    return int(hit[0]) if hit.size else None


def lemma3_iteration_bound(alpha: float, eps: float, sigma: float, eta: float) -> int:
    """Iterations after which ``x_t >= sigma - eps``.

    ``ceil((log(4 sigma/alpha) + log(4 sigma/eps)) / log(1 + eta sigma))``;
    requires ``alpha <= eps <= 0.1 sigma`` and ``eta sigma < 1``.
    """
    if not (0 < alpha <= eps <= 0.1 * sigma):
        raise InputError("need 0 < alpha <= eps <= 0.1 * sigma")
    if not (eta > 0 and eta * sigma < 1):
        raise InputError("need 0 < eta * sigma < 1")
    num = math.log(4 * sigma / alpha) + math.log(4 * sigma / eps)
    return ceil_count(num / math.log1p(eta * sigma))


def lemma4_separation(sigma1: float, sigma2: float, eta: float, alpha: float, eps: float) -> tuple[int, float]:
    """Time for the faster map to reach ``sigma1 - eps``, and a cap on the slower one.

    Two maps start from the same ``alpha`` with attractors ``sigma1 > sigma2``.
    Returns ``T = ceil(log(16 sigma1^2 / (eps alpha)) / log(1 + eta sigma1))``
    and ``y_bound = (16 sigma1^2 / eps) * alpha^((sigma1 - sigma2)/(sigma1 + sigma2))``.
    """
    if not (sigma1 > sigma2 > 0):
        raise InputError("need sigma1 > sigma2 > 0")
    if not (0 < eta <= 1 / (4 * sigma1)):
        raise InputError("need 0 < eta <= 1 / (4 sigma1)")
    if not (0 < alpha <= eps <= 0.1 * sigma1):
        raise InputError("need 0 < alpha <= eps <= 0.1 * sigma1")
    T = ceil_count(math.log(16 * sigma1**2 / (eps * alpha)) / math.log1p(eta * sigma1))
    y_bound = (16 * sigma1**2 / eps) * alpha ** ((sigma1 - sigma2) / (sigma1 + sigma2))
    return T, y_bound


def bernoulli_check(x: float, r: float) -> bool:
    """Whether ``(1+x)^r <= 1 + r x / (1 - (r-1) x) + 1e-12`` for ``0 <= x < 1/(r-1)``."""
    if not r > 1:
        raise InputError("need r > 1")
    if not (0 <= x < 1 / (r - 1)):
        raise InputError("need 0 <= x < 1/(r-1)")
    lhs = math.exp(r * math.log1p(x))
    rhs = 1 + r * x / (1 - (r - 1) * x)
    return lhs <= rhs + 1e-12
