"""Exception hierarchy shared across the package."""


class UasamError(Exception):
    """Base class for all package errors."""


class ShapeError(UasamError):
    """Operands do not compose for the requested operation."""


class NonFiniteError(UasamError):
    """A forward op produced NaN or Inf, or a loss went non-finite."""


class TrackingError(UasamError):
    """Autodiff misuse: backward on an untracked or non-scalar tensor."""


class ConfigError(UasamError):
    """Malformed or unknown configuration."""


class DataError(UasamError):
    """Base class for dataset / file-format problems."""


class MissingFileError(DataError):
    """A manifest referenced a file that does not exist."""


class MalformedHeaderError(DataError):
    """A grid file header could not be parsed."""


class ShapeMismatchError(DataError):
    """Image and mask shapes disagree for an example."""


class CheckpointError(DataError):
    """Checkpoint is corrupt, wrong version, or incompatible."""
