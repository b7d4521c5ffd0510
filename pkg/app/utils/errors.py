"""
Exception hierarchy shared by the mesh, assembly, solver and driver layers.
"""


class BiotFetidpError(Exception):
    """Base class for every error raised by this package."""

    pass


class InvalidArgumentError(BiotFetidpError, ValueError):
    """Raised when an input violates an operation's precondition."""

    pass


class SingularMatrixError(BiotFetidpError):
    """Raised when a factorization meets a zero pivot."""

    def __init__(
        self,
        message: str,
        size: int,
        pivot_index: int | None = None,
        pivot_value: float | None = None,
        label: str | None = None,
    ):
        self.size = size
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        self.label = label
        details = f"size={size}"
        if pivot_index is not None:
            details += f", pivot_index={pivot_index}, pivot_value={pivot_value:.3e}"
        if label:
            details = f"{label}: {details}"
        super().__init__(f"{message} ({details})")


class PcgBreakdownError(BiotFetidpError):
    """Raised when the CG recurrence produces non-finite or non-positive curvature."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} at iteration {iteration}")


class ConsistencyError(BiotFetidpError):
    """Raised when the recovered dual copies disagree across the interface."""

    def __init__(self, message: str, jump: float, reference: float):
        self.jump = jump
        self.reference = reference
        super().__init__(f"{message} (jump={jump:.3e}, reference={reference:.3e})")


class ConvergenceError(BiotFetidpError):
    """Raised by the time loop when an interface solve does not converge."""

    def __init__(self, message: str, step: int, iterations: int, residual: float):
        self.step = step
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (step={step}, iterations={iterations}, residual={residual:.3e})")
