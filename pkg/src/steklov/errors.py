"""Exception hierarchy shared by all modules."""


class SteklovError(Exception):
    """Base class for every error raised by this package."""


class UnsupportedShapeError(SteklovError, TypeError):
    pass


class DomainError(SteklovError, ValueError):
    """A point or argument lies outside the admissible domain."""


class NumericalError(SteklovError, RuntimeError):
    """An iterative method failed; ``diagnostics`` holds the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class MeshingError(SteklovError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ResourceError(SteklovError, MemoryError):
    pass


class MeshParseError(SteklovError, ValueError):
    pass


class MeshIndexError(MeshParseError):
    pass


class MeshValidationError(SteklovError, ValueError):
    pass


class AssemblyError(SteklovError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateInputError(SteklovError, ValueError):
    pass


class HypothesisViolation(SteklovError, ValueError):
    """Inputs are inconsistent with the curvature hypotheses of a bound."""


class CoverageError(SteklovError):
    pass


class ContractError(SteklovError, TypeError):
    pass
