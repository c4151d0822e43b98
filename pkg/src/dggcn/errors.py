"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes; the message names both."""


class NumericError(ArithmeticError):
    """An operation produced NaN or Inf, or numeric preconditions failed."""


class TrainingDiverged(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(ValueError):
    """Invalid configuration value, file, or checkpoint version."""


class GraphError(ValueError):
    """A molecular graph violates a structural invariant."""
