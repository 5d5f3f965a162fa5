"""Exception types shared across the toolkit."""


class VecgasError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(VecgasError):
    """Component counts or array shapes do not match."""


class MatrixError(VecgasError):
    """Interaction matrix violates symmetry / positive semidefiniteness."""


class GeometryError(VecgasError):
    """Empty or otherwise unusable set geometry or grid."""


class WeightError(VecgasError):
    """External field is not finite on enough of the grid."""


class DegenerateConfigError(VecgasError):
    """Configuration has coincident points inside one component."""


class DomainError(VecgasError):
    """Argument outside the mathematical domain of an operation."""


class BudgetError(VecgasError):
    """Exact enumeration would exceed the configured budget."""


class MixingError(VecgasError):
    """Markov chain shows no accepted moves over a full sweep window."""


class MixingWarning(UserWarning):
    """Non-fatal diagnostic counterpart of MixingError."""


class StatisticsError(VecgasError):
    """Not enough data points for the requested fit."""


class RankError(VecgasError):
    """Gram matrix is numerically rank deficient for the requested degree."""


class ConfigError(VecgasError):
    """Experiment configuration cannot be parsed or validated."""
