"""Exception taxonomy.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, NumericError -> 3.
"""


class ShapeError(ValueError):
    """Tensor dimensions disagree with an operation's contract."""


class ConfigError(ValueError):
    """Invalid hyperparameter, spec field, or command-line/config value."""


class StateError(RuntimeError):
    """An object was used before required state existed (grads, running stats)."""


class NumericError(ArithmeticError):
    """Non-finite values, failed gradient checks, or broken loss identities."""


class DataError(RuntimeError):
    """Dataset or file-level failure."""


class FormatError(DataError):
    """File content is not a supported image/checkpoint format."""


class TruncatedFileError(DataError):
    """File ended before the declared payload was complete."""


class ChecksumError(DataError):
    """Stored CRC does not match the payload."""


class VersionError(DataError):
    """Checkpoint format version is not supported."""
