"""Exception hierarchy for mildnet."""


class MildnetError(Exception):
    """Base class for all library errors."""


class InvalidTopologyError(MildnetError, ValueError):
    pass


class ShapeError(MildnetError, ValueError):
    pass


class ContractError(MildnetError, ValueError):
    """A documented input contract was violated (e.g. unnormalized teacher)."""


class CapacityError(MildnetError, ValueError):
    """Too few neurons share a mask for the coefficient construction."""


class BudgetExhaustedError(MildnetError, RuntimeError):
    """Coefficient updates pushed some lambda_j below lam0 / 2."""


class NonConvergenceError(MildnetError, RuntimeError):
    """Inner gradient descent hit its iteration cap."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InfeasibleSolverError(MildnetError, RuntimeError):
    """The exhaustive grid is larger than the configured evaluation cap."""


class StaleGDError(MildnetError, RuntimeError):
    """No inactive neuron was available on the mask chosen for perturbation."""


class UnsupportedDimensionError(MildnetError, ValueError):
    pass


class GenerationError(MildnetError, RuntimeError):
    """Rejection sampling ran out of budget."""

    def __init__(self, message, acceptance_rate=None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class DatasetParseError(MildnetError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantViolation(MildnetError, AssertionError):
    """A guarantee that the analysis says must hold was observed to fail."""
