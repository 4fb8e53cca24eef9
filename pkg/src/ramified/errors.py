"""Exception hierarchy shared by the package."""


class RamifiedError(Exception):
    """Base class for all package errors."""


class ValidationError(RamifiedError, ValueError):
    """Input rejected before any computation."""


class OverlapError(RamifiedError):
    """Two hexagons of a pre-fractal have intersecting interiors."""


class DepthError(RamifiedError, ValueError):
    pass


class ExactSearchLimit(RamifiedError):
    """Exhaustive subset search requested beyond the supported depth."""


class MeshError(RamifiedError):
    pass


class CoercivityError(RamifiedError):
    """The assembled operator failed the discrete coercivity check."""


class NonCoerciveError(CoercivityError):
    pass


class SingularSystem(RamifiedError):
    pass


class StepError(RamifiedError):
    """Non-finite values appeared during time stepping."""


class ZeroData(RamifiedError, ValueError):
    pass


class ResolutionError(RamifiedError):
    """A probe ball is too small for the mesh."""


class InvariantViolation(RamifiedError):
    pass
