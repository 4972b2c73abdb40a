"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """NaN input, log of a non-positive value, or a diverged loss."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ConfigError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    def __init__(self, message, dialogue_id=None):
        self.dialogue_id = dialogue_id
        prefix = f"dialogue {dialogue_id!r}: " if dialogue_id is not None else ""
        super().__init__(prefix + message)


class EmptyHypothesisError(ValueError):
    """The NLU head was handed zero interface states."""
