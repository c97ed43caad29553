"""Exception types shared across the sampler."""


class TmgError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(TmgError):
    """A matrix required to be positive definite is not."""

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class DimensionMismatch(TmgError):
    """Operands with incompatible dimensions."""


class DegenerateAllZero(TmgError):
    """All polynomial coefficients are zero."""


class QuarticSolverFailure(TmgError):
    """Root polishing could not reach the required residual."""


class ZeroNormal(TmgError):
    """Reflection requested against a zero normal vector."""


class BounceLimitExceeded(TmgError):
    """Too many reflections in a single trajectory; likely numerical livelock."""


class EventLimitExceeded(BounceLimitExceeded):
    """Too many sign-flip/wall events in a single piecewise trajectory."""


class InfeasibleState(TmgError):
    """The chain produced a state violating a constraint beyond tolerance."""


class InfeasibleInit(TmgError):
    """A chain was started from an infeasible point."""

    def __init__(self, index, value, message=None):
        self.index = int(index)
        self.value = float(value)
        super().__init__(
            message
            or f"initial point violates constraint {index} (value {value:.6g})"
        )


class EmptyConditionalInterval(TmgError):
    """Gibbs conditional interval came out empty from a feasible state."""


class ZeroVariance(TmgError):
    """Diagnostics requested on a series with no variance."""


class DegeneratePrior(TmgError):
    """A model builder was given a prior that destroys positive definiteness."""
