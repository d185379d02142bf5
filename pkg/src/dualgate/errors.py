"""Shared exception types."""


class ContractViolationError(ValueError):
    """An operation was called with arguments that break its contract."""


class NumericalBlowupError(RuntimeError):
    """Integration produced a non-finite state."""


class PolicyFailureError(RuntimeError):
    """A feedback policy returned a non-finite input."""


class InsufficientDataError(ValueError):
    """A trajectory does not cover the requested window."""


class PlanningFailureError(RuntimeError):
    """A planner could not produce a constraint-satisfying trajectory."""
