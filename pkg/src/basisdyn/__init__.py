"""Basis-coefficient analysis of gradient-descent trajectories.

Each supported model (kernel regression, symmetric matrix factorization,
orthogonal symmetric tensor decomposition) is simulated with plain GD and
its iterates are expressed in an orthonormal function basis, so that the
trajectory of every coefficient can be inspected, bounded and plotted.
"""

from .core import (
    CoefficientTrajectory,
    DominanceFit,
    LossDecomposition,
    Theorem1Inputs,
    crossing_times,
    decomposed_loss,
    dominance_fit,
    gradient_independence_score,
    init_condition_check,
    prop1_residual_check,
    theorem1_bounds,
)
from .errors import (
    BasisDynError,
    ConfigError,
    DegenerateFitError,
    DimensionError,
    DivergenceError,
    FeasibilityError,
    FormatError,
    InputError,
    UndefinedRatioError,
)

__version__ = "0.1.0"
