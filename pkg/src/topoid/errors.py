"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``UsageError`` (bad input, exit 2) and ``ComputationError`` (a rank or
residual test failed on otherwise valid input, exit 1).
"""


class TopoIdError(Exception):
    pass


class UsageError(TopoIdError, ValueError):
    pass


class ComputationError(TopoIdError, ArithmeticError):
    pass


class DimensionMismatch(UsageError):
    pass


class PartitionMismatch(UsageError):
    pass


class DepthExceedsLength(UsageError):
    pass


class InsufficientDepth(UsageError):
    pass


class InsufficientOrder(UsageError):
    pass


class PreconditionViolated(UsageError):
    pass


class NotHomogeneousSiso(PreconditionViolated):
    pass


class ProblemTooLarge(UsageError):
    pass


class RankDeficientS(ComputationError):
    """The measured-output map does not have full column rank."""


class SingularResolvent(ComputationError):
    pass


class NotPersistentlyExciting(ComputationError):
    pass


class ExcitationFailure(ComputationError):
    pass


class ResidualTooLarge(ComputationError):
    pass
