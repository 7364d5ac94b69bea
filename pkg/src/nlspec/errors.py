"""Exception types shared across the package."""


class NlspecError(Exception):
    """Base class; ``module`` names where the failure originated."""

    def __init__(self, module: str, message: str):
        super().__init__(f"{module}: {message}")
        self.module = module


class InvariantViolation(NlspecError):
    """A checked mathematical invariant failed; ``invariant`` is its short name."""

    def __init__(self, module: str, invariant: str, detail: str = ""):
        msg = f"invariant {invariant} violated" + (f" ({detail})" if detail else "")
        super().__init__(module, msg)
        self.invariant = invariant


class ConvergenceError(NlspecError):
    """An iterative method stopped before reaching its tolerance."""
