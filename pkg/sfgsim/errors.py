"""Exception hierarchy for the simulator.

Every error raised on purpose by ``sfgsim`` derives from :class:`SfgError`.
Input problems also derive from ``ValueError`` and numerical failures from
``RuntimeError`` so plain ``except ValueError`` keeps working for callers.
"""


class SfgError(Exception):
    """Base class for simulator errors."""


class InvalidSpecError(SfgError, ValueError):
    """Lattice specification is not usable."""


class InsufficientRegionError(SfgError, ValueError):
    """Enumerated region too small for the requested shells."""


class InvalidModelError(SfgError, ValueError):
    """Donor model parameters violate the model invariants."""


class PreconditionError(SfgError, ValueError):
    """An operation was called with inputs outside its preconditions."""


class ShapeError(SfgError, ValueError):
    """Array input has the wrong shape for the requested metric."""


class SystemSizeError(SfgError, ValueError):
    """Spin cluster exceeds the dense-matrix size limit."""


class DependencyError(SfgError, ValueError):
    """A required upstream result is missing."""


class FitFailureError(SfgError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IllConditionedGeometryError(SfgError, RuntimeError):
    def __init__(self, message, overlap=None):
        super().__init__(message)
        self.overlap = overlap


class NoCleanGateError(SfgError, RuntimeError):
    """No gate time leaves the control disentangled; ``best`` holds the closest candidate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ScenarioError(SfgError, ValueError):
    def __init__(self, message, line=None, column=None, path=None):
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})"
        elif path:
            location = f" (at {path})"
        super().__init__(message + location)
        self.line = line
        self.column = column
        self.path = path


class StageError(SfgError, RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
