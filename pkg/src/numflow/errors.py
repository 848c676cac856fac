"""Exception types shared across the package."""


class NumflowError(Exception):
    """Base class for all library errors."""


class NoPath(NumflowError):
    """Destination unreachable from source."""


class InvalidPath(NumflowError):
    """A class path references unknown links or is not a directed walk."""


class TooManyClasses(NumflowError):
    """Requested more classes than admissible source-destination pairs."""


class InsufficientPaths(NumflowError):
    """Fewer link-disjoint paths exist than requested."""


class NotLegendre(NumflowError):
    """Operation requires a strictly concave differentiable (Legendre) family."""


class MixedTags(NumflowError):
    """Class members must share a single utility family."""


class MixedExponent(NumflowError):
    """Negative-power members of one class must share the exponent."""


class DomainError(NumflowError):
    """Argument lies outside the function's effective domain."""


class DimensionMismatch(NumflowError):
    """Vector/matrix dimensions inconsistent with the instance."""


class NotSupportedUtility(NumflowError):
    """Solver does not handle this utility family."""


class MaxIterExceeded(NumflowError):
    """Active-set loop failed to settle (ill-conditioned projection)."""


class InconsistentTargets(NumflowError):
    """Path aggregates and per-flow targets disagree beyond tolerance."""


class NonConvergence(NumflowError):
    """Reference oracle failed to reach its residual target."""


class IoError(NumflowError):
    """Report or instance file could not be written/read."""
