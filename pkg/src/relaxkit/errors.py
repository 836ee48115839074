"""Exception hierarchy shared by all relaxkit modules."""


class RelaxkitError(Exception):
    """Base class for every error raised by relaxkit."""


class HypothesisViolation(RelaxkitError):
    """Sampled integrand values break the declared growth constants."""


class UnsupportedDimension(RelaxkitError):
    """Requested operation is not available in this dimension."""


class UnsupportedIntegrand(RelaxkitError):
    """Integrand class outside the supported scope (e.g. non-convex vector W)."""


class RecessionEstimationError(RelaxkitError):
    """The ratio h(tb)/t failed to settle along the T-ladder."""


class RepresentationError(RelaxkitError, ValueError):
    """Measure or BV data violates a representation invariant."""


class DomainError(RelaxkitError, ValueError):
    """A point lies outside the interval an object is defined on."""


class PreconditionError(RelaxkitError, ValueError):
    """Inputs do not satisfy the documented preconditions."""


class NumericalError(RelaxkitError):
    """An iterative solver diverged or two solvers disagree."""
