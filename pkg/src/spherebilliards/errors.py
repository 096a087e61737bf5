"""Exception hierarchy shared by all modules.

Two families: ``ConfigurationError`` for inputs that can never work (a table
that is not convex, a metric with a non-positive curvature sample) and
``NumericalError`` for solver failures on otherwise valid inputs.  The CLI maps
them to exit codes 2 and 3.
"""


class BilliardError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BilliardError):
    pass


class NumericalError(BilliardError):
    pass


class NotPositivelyCurved(ConfigurationError):
    pass


class NotConvex(ConfigurationError):
    pass


class NotSimple(ConfigurationError):
    pass


class ConjugateRisk(ConfigurationError):
    pass


class TableInvariantError(ConfigurationError):
    pass


class IntegrationFailure(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class AmbiguousMinimizer(NumericalError):
    pass


class GrazingHit(NumericalError):
    pass


class NoHit(NumericalError):
    pass


class OrderViolation(NumericalError):
    pass


class TwistDegenerate(NumericalError):
    pass


class NotElliptic(BilliardError):
    pass


class NotHyperbolic(BilliardError):
    pass


class DefectNonzero(BilliardError):
    pass


class SupportOverlap(BilliardError):
    pass


class TargetUnreachable(NumericalError):
    pass
