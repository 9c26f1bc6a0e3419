"""Exception hierarchy shared by every module in the package."""


class BasisDynError(Exception):
    """Base class for all package errors."""


class InputError(BasisDynError, ValueError):
    """Invalid argument value (non-finite, out of range, empty set, ...)."""


class DimensionError(InputError):
    """Arrays with incompatible shapes."""


class DegenerateFitError(InputError):
    """A regression problem without enough spread to identify its slope."""


class UndefinedRatioError(InputError):
    """A ratio whose denominator is not strictly positive."""


class DivergenceError(BasisDynError, ArithmeticError):
    """An iterate left the finite region guarded by the divergence bound."""


class FeasibilityError(BasisDynError):
    """Brute-force enumeration would exceed its budget."""


class FormatError(BasisDynError):
    """Malformed file contents (CSV rows, matrix files, basis files)."""


class ConfigError(InputError):
    """Experiment configuration failed validation.

    ``key`` names the offending field so the CLI can report it.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
