"""Typed exceptions shared across the package."""


class VmcError(Exception):
    """Base class for all vmcbench errors."""


class InvalidRangeError(VmcError, ValueError):
    """A numeric range is empty or inverted (e.g. hi <= lo)."""


class InsufficientDataError(VmcError, ValueError):
    """Not enough samples/episodes/iterations for the requested operation."""


class InvalidParameterError(VmcError, ValueError):
    """A kernel or config parameter is outside its legal domain."""


class MissingDistractorError(VmcError, ValueError):
    """Overlay augmentation requested without a distractor pool."""


class ConfigurationError(VmcError, ValueError):
    """An experiment or trainer configuration is inconsistent."""


class ShapeError(VmcError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class InvalidModeError(VmcError, ValueError):
    """A backend mode does not permit the requested operation."""


class UnsupportedTransitionError(VmcError, ValueError):
    """A backend mode transition that is not allowed (e.g. freezing a scratch net)."""


class UnsupportedEnvironmentError(VmcError, ValueError):
    """The wrapped environment does not expose what the wrapper needs."""


class ExpertFailureError(VmcError, RuntimeError):
    """The scripted expert failed too often while generating demonstrations."""


class EpisodeDoneError(VmcError, RuntimeError):
    """An environment was stepped after its episode finished."""


class NumericalError(VmcError, RuntimeError):
    """A non-finite value surfaced where finite math was required."""


class ArchiveFormatError(VmcError, ValueError):
    """Base class for demonstration-archive format violations."""


class ArchiveVersionError(ArchiveFormatError):
    """Unsupported archive format version."""


class ArchiveTruncationError(ArchiveFormatError):
    """An episode blob is shorter than the manifest demands."""


class ArchiveSizeError(ArchiveFormatError):
    """Manifest arithmetic does not match the stored bytes."""


class OutputPathError(VmcError, OSError):
    """An output location cannot be created or written."""
