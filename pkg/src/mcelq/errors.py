"""Exception types shared across the package."""


class McelqError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(McelqError):
    """Shapes or sizes that cannot be combined."""


class ContractError(McelqError):
    """An argument violates a documented precondition."""


class NumericError(McelqError):
    """A non-finite value appeared where finite math was required."""


class EncodingError(McelqError):
    """A quantization code or bit position is out of range."""


class DataFormatError(McelqError):
    """A file on disk does not match its expected format."""


class IdxMagicError(DataFormatError):
    """IDX file starts with the wrong magic number."""


class IdxTruncatedError(DataFormatError):
    """IDX file ends before its declared payload."""


class IdxCountError(DataFormatError):
    """Image and label files disagree on the number of items."""


class ModelFormatError(DataFormatError):
    """Serialized model file is corrupt or has the wrong version."""


class UsageError(McelqError):
    """Bad command line arguments; maps to exit code 2."""
