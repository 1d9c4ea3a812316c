"""Named exceptions raised across the package."""


class BktError(Exception):
    """Base class for all package errors."""


class OddPeriodicSide(BktError, ValueError):
    pass


class SideTooSmall(BktError, ValueError):
    pass


class DimensionMismatch(BktError, ValueError):
    pass


class UnknownVertex(BktError, KeyError):
    pass


class NotBipartite(BktError):
    pass


class SingularBeyondKernel(BktError, ArithmeticError):
    pass


class NotMeanZero(BktError, ValueError):
    pass


class BadRow(BktError, ValueError):
    pass


class SupportTooLargeForExactCover(BktError):
    pass


class NotNeutral(BktError, ValueError):
    pass


class OverlappingSupports(BktError, ValueError):
    pass


class NotNormalized(BktError, ValueError):
    pass


class NonTermination(BktError, RuntimeError):
    pass


class BipartitionUnavailable(BktError):
    pass


class PropertyViolation(BktError, AssertionError):
    pass


class NeutralRestriction(BktError, ValueError):
    pass


class GradientOverlap(BktError, AssertionError):
    pass


class FactorizationFailure(BktError, ArithmeticError):
    pass


class StateSpaceTooLarge(BktError):
    pass


class PreconditionViolated(BktError, ValueError):
    pass


class ConfigInvalid(BktError, ValueError):
    pass


class CheckFailed(BktError):
    pass
