"""Exception types shared across the toolkit."""


class FoilboxError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FoilboxError):
    """Input dimensions do not match what an operation requires."""


class FormatError(FoilboxError):
    """A binary file (TNSR/ANET/LBLS) is malformed or truncated."""


class ConfigError(FoilboxError):
    """A configuration value violates its declared constraints."""


class NumericDegeneracyError(FoilboxError):
    """A relevance-propagation denominator collapsed to ~zero.

    Carries the index of the offending layer so the caller can tell
    which propagation step degenerated.
    """

    def __init__(self, layer_index: int, message: str):
        super().__init__(message)
        self.layer_index = layer_index


class BudgetExhausted(FoilboxError):
    """The oracle's query budget has been fully consumed."""

    def __init__(self, used: int, budget: int):
        super().__init__(f"query budget exhausted: {used}/{budget} used")
        self.used = used
        self.budget = budget


class TrainingError(FoilboxError):
    """Fixture training diverged (NaN loss)."""
