"""Exception types shared across the package."""


class InconsistentStrategyError(ValueError):
    """Rate curve does not integrate to the declared share total."""


class NegativeRateError(ValueError):
    """Inventory curve increases somewhere, implying a negative execution rate."""


class SolverFailureError(RuntimeError):
    """A linear or nonlinear solve failed; ``detail`` says where."""

    def __init__(self, message: str, pivot_index: int | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index


class ConsistencyError(RuntimeError):
    """Two independent evaluations of the same quantity disagree."""
