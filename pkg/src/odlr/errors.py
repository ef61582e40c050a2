"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage errors -> 1,
data errors -> 2, numeric failures -> 3.
"""


class OdlrError(Exception):
    """Base class for all package errors."""


class ConfigurationError(OdlrError):
    """A shape, dimension, or configuration value is inconsistent."""


class DataError(OdlrError):
    """Input data is missing, empty, or undecodable."""


class NumericError(OdlrError):
    """A numeric invariant was violated (NaN/Inf loss or gradient)."""


class CheckpointError(OdlrError):
    """Base class for checkpoint file problems."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class CheckpointVersionError(CheckpointError):
    """File uses an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends mid-record; no partial network is returned."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor does not match the shape implied by the config."""
