"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all cavitymatch errors."""


class NotATreeError(ToolkitError, ValueError):
    """Raised when a graph required to be a tree has a cycle or is disconnected."""


class InvalidMatchingError(ToolkitError, ValueError):
    """Raised when an edge set violates the one-edge-per-vertex invariant."""


class InconsistentMessagesError(ToolkitError, ValueError):
    """Raised when the edge decision rule selects two edges at one vertex.

    Only possible for message fields that are not fixed points (e.g. partially
    converged iteration on a graph with cycles).
    """


class CoverBudgetError(ToolkitError, RuntimeError):
    """Raised when a universal cover would exceed its vertex budget."""


class SolverBudgetError(ToolkitError, RuntimeError):
    """Raised when an exact solver is asked to exceed its configured size bound."""


class NonConvergenceError(ToolkitError, RuntimeError):
    """Raised when a fixed-point iteration fails to reach tolerance.

    Carries the last residual in ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DegenerateMatrixError(ToolkitError, ValueError):
    """Raised by the load balancer on a zero row or column sum."""


class DecompositionStalledError(ToolkitError, RuntimeError):
    """Raised when no perfect matching exists on the support of a residual matrix."""


class ConfigError(ToolkitError, ValueError):
    """Configuration validation error, carrying the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
