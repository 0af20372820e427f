"""Exception hierarchy shared across the package."""


class DataError(Exception):
    """Bad or unreadable data/model artifact (CLI exit status 2)."""


class DatasetFormatError(DataError):
    pass


class CheckpointError(DataError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointDigestError(CheckpointError):
    pass


class TrainingDivergedError(FloatingPointError):
    """Raised when a loss or gradient becomes non-finite."""


class ClassMismatchError(DataError, ValueError):
    """Model and dataset disagree on the class set."""
