"""Exception types shared across the package."""


class ParaformerError(Exception):
    pass


class ShapeError(ParaformerError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(ParaformerError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(ParaformerError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(ParaformerError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class EmptyResultError(ParaformerError, ValueError):
    """An operation would produce an empty dataset or window batch."""


class FormatError(ParaformerError, ValueError):
    """Base class for binary file parse errors."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class SizeMismatchError(FormatError):
    """Header-declared sizes overflow or disagree with the payload length."""


class TrainingDiverged(ParaformerError, ArithmeticError):
    """Raised when the loss becomes non-finite.

    ``params`` holds the last good parameter snapshot and ``run`` the partial
    training record, so callers can still persist a checkpoint.
    """

    def __init__(self, message, params=None, run=None):
        super().__init__(message)
        self.params = params
        self.run = run
