"""Exceptions and diagnostic warnings raised across the package."""


class DensityHerdError(Exception):
    """Base class for all errors raised by densityherd."""


class GridMismatch(DensityHerdError, ValueError):
    pass


class NonPositiveTarget(DensityHerdError, ValueError):
    pass


class Infeasible(DensityHerdError):
    """The requested follower density cannot be sustained by the available leaders."""


class Infeasible2D(Infeasible):
    pass


class NonZeroMeanInput(DensityHerdError, ValueError):
    pass


class MassMismatch(DensityHerdError, ValueError):
    pass


class VanishingFollowerDensity(DensityHerdError, ValueError):
    pass


class NumericalBlowup(DensityHerdError, FloatingPointError):
    pass


class TooFewAgents(DensityHerdError, ValueError):
    pass


class ConfigError(DensityHerdError, ValueError):
    """Scenario configuration could not be parsed or validated."""


class UnknownScenario(ConfigError, KeyError):
    pass


class DiagnosticWarning(UserWarning):
    """Base class for numerical diagnostics that do not abort a computation."""


class NonPeriodicAntiderivative(DiagnosticWarning):
    pass


class VacuumRegion(DiagnosticWarning):
    pass


class SupportViolation(DiagnosticWarning):
    pass


class IllConditionedMode(DiagnosticWarning):
    pass


class StabilityWarning(DiagnosticWarning):
    pass
