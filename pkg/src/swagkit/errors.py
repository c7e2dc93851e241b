"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """A configuration object violates one of its invariants."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class DivergedError(RuntimeError):
    """Training diverged. Carries the epoch index where it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class EmptyAccumulatorError(ValueError):
    """An operation needs at least one collected iterate."""


class InsufficientIteratesError(ValueError):
    """An operation needs more collected iterates than are available."""


class ParseError(ValueError):
    """A data file could not be parsed. Message cites row/column."""


class StratificationError(ValueError):
    """A split left some class without training examples."""
