"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates an operation's precondition."""


class SingularInputError(ValueError):
    """Raised when a formula is evaluated where one of its log arguments vanishes."""


class BudgetExceededError(RuntimeError):
    """Raised when a moment matrix would exceed the configured size budget."""

    def __init__(self, dim, budget):
        super().__init__(f"moment matrix dimension {dim} exceeds budget {budget}")
        self.dim = dim
        self.budget = budget
