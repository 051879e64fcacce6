"""Exception types shared by the compiled and pure-Python solvers."""


class DependencyError(RuntimeError):
    """A table entry was read before it was computed."""


class NonFiniteError(FloatingPointError):
    """The solver produced a NaN or infinite propagator."""


class BudgetError(ValueError):
    """A cross sequence exceeds the truncation budget."""
