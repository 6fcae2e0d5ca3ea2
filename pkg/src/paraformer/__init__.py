"""Encoder-only Transformer emulator for sub-grid climate tendencies, built on a numpy autodiff core."""

from .errors import (BadMagicError, ConfigError, ContractError, EmptyResultError, FormatError,
                     NumericError, ParaformerError, ShapeError, SizeMismatchError,
                     TrainingDiverged, TruncatedFileError, UnsupportedVersionError)

__version__ = "0.1.0"
