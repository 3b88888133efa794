"""Exception types shared across the toolkit.

User-facing errors (bad input files, bad configuration, bad flags) subclass
UserError so the CLI can map them to exit code 1; anything else that escapes
is an internal error (exit code 2).
"""


class TinyAsrError(Exception):
    """Base class for all errors raised by tinyasr."""


class UserError(TinyAsrError):
    """Errors caused by user input: files, flags, configuration."""


class DimensionError(TinyAsrError):
    """Array shapes do not satisfy an operation's contract."""


class ContractError(TinyAsrError):
    """An argument violates a documented precondition."""


class ConfigError(UserError):
    """Invalid or unknown configuration key/value."""


class ManifestError(UserError):
    """A data manifest or one of the files it references is unusable."""


class AlphabetError(UserError):
    """Text contains a character outside the configured alphabet."""


class UnalignableError(TinyAsrError):
    """Target sequence has no frame alignment of the required length."""


class CheckpointError(UserError):
    """A parameter container file is missing, corrupt, or incompatible."""


class TrainingDivergedError(TinyAsrError):
    """Loss became non-finite during training."""
