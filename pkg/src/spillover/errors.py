"""Exception hierarchy shared by every module of the package."""


class SpilloverError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInstance(SpilloverError, ValueError):
    """Instance data breaks a structural invariant (lengths, signs, ...)."""


class InfeasibleInstance(SpilloverError):
    """Preprocessing left nothing to plan (every item was removed)."""


class InvalidPlan(SpilloverError, ValueError):
    """Plan does not account for the instance demand."""


class UndefinedGap(SpilloverError, ValueError):
    """Optimality gap requested against a non-positive reference cost."""


class ProtocolViolation(SpilloverError):
    """An agent received or produced a message the protocol forbids."""


class ReplayMismatch(SpilloverError):
    """A recorded trace does not reproduce under the agent step functions."""


class OracleLimitExceeded(SpilloverError):
    """Instance is too large for exhaustive search."""


class NodeBudgetExceeded(SpilloverError):
    """Exhaustive search ran out of nodes before proving optimality."""
