"""Exception taxonomy shared by every module in the package."""


class ServoparkError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParams(ServoparkError):
    """A parameter violates its stated constraint (sign, range, or count)."""


class ZeroAnchorDepth(ServoparkError):
    """The anchor feature height is zero, so the error scaling is undefined."""


class DegenerateFeature(ServoparkError):
    """A feature's vertical normalized coordinate is too close to zero to divide by."""


class InsufficientFeatures(ServoparkError):
    """Fewer matched features than the estimator needs."""


class DegenerateGeometry(ServoparkError):
    """The feature configuration leaves the pose unobservable."""


class NumericalFailure(ServoparkError):
    """Iterative refinement failed to reach its required tolerance."""


class EstimatorStarvation(ServoparkError):
    """Fewer than two features stayed visible for too long during a closed-loop run."""


class EmptyLog(ServoparkError):
    """A summary was requested for an empty trajectory log."""


class ConfigError(ServoparkError):
    """Malformed scenario file or command-line configuration."""
