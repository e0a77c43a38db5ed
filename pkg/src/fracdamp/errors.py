"""Exception hierarchy shared by every fracdamp module."""


class FracDampError(Exception):
    """Base class for all errors raised by fracdamp."""


class ConfigurationError(FracDampError, ValueError):
    """Invalid parameters, grid sizes or configuration keys."""


class DomainError(FracDampError, ValueError):
    """An argument lies outside the domain of a formula."""


class HypothesisError(FracDampError, ValueError):
    """A closed form was requested outside the hypotheses it was derived under."""


class SingularCaseError(FracDampError, ValueError):
    """The generator is not invertible at the requested point (eta = 0, lambda = 0)."""


class StructuralError(FracDampError, ValueError):
    """Array shapes do not match the grid or the discretization."""


class GeometryError(FracDampError, ValueError):
    """Degenerate or inconsistently labelled geometry."""


class FitError(FracDampError, ValueError):
    """A regression cannot be performed on the supplied data."""


class NumericalError(FracDampError, RuntimeError):
    """A linear solve or an iteration broke down.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (shift, iteration count, last residual ...).
    """

    def __init__(self, msg, **diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


class NearSpectrumError(NumericalError):
    """The resolvent was requested (numerically) on the spectrum."""
