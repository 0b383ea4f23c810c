"""Exception types shared across the package."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ShapeError(ContractError):
    """Array dimensions do not match what the operation expects."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class ConfigError(ValueError):
    """An experiment config could not be parsed or validated."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
