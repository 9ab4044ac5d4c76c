"""Exception hierarchy shared across the package.

The CLI and HTTP service map these onto exit codes / error kinds:
ConfigError -> "config", DataError -> "data", everything else -> "runtime".
"""


class FedTierError(Exception):
    """Base class for all package errors."""


class ConfigError(FedTierError):
    """Invalid experiment configuration."""


class DataError(FedTierError):
    """Dataset is missing, malformed, or insufficient for the request."""


class IdxBadMagicError(DataError):
    """IDX file does not carry the expected magic number."""


class IdxTruncatedError(DataError):
    """IDX file is shorter than its header promises."""


class IdxCountMismatchError(DataError):
    """Image and label files disagree on the sample count."""


class ShapeMismatchError(FedTierError):
    """Tensor or parameter layout does not match what the operation expects."""


class CodecError(FedTierError):
    """Base class for wire-format errors."""


class CodecVersionError(CodecError):
    """Encoded payload carries an unsupported format version."""


class CodecTruncatedError(CodecError):
    """Encoded payload ends early or carries trailing bytes."""


class CodecShapeError(CodecError):
    """Decoded tensors disagree with the expected architecture layout."""


class ProtocolError(FedTierError):
    """Client/edge/fedge desynchronization (e.g. update for an unknown model)."""


class AggregationError(FedTierError):
    """Invalid aggregation input (empty list, bad weight, layout mismatch)."""
