"""Exception hierarchy for the package."""


class LgiError(Exception):
    """Base class for all package errors."""


class DegenerateMeter(LgiError, ValueError):
    """Reflectivities are equal, so the meter carries no information about sigma_z."""


class UnsupportedSize(LgiError, ValueError):
    """Detector count outside the supported range 1..4."""


class ZeroConditioningProbability(LgiError, ZeroDivisionError):
    """A conditioned average was requested for an event that never occurs."""


class EmptyData(LgiError, ValueError):
    """A count table with zero total counts was passed to an estimator."""


class InsufficientSettings(LgiError, ValueError):
    """Tomography data cannot identify a two-qubit state."""


class NonConvergence(LgiError, RuntimeError):
    """An iterative optimizer hit its iteration cap."""


class ScenarioError(LgiError, ValueError):
    """Invalid scenario configuration."""
