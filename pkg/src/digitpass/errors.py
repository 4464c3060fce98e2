"""Exception types shared across the package."""


class DigitPassError(Exception):
    """Base class for all errors raised by this package."""


class BlankImageError(DigitPassError):
    """Image has no foreground pixels; the sample is unusable."""


class DimensionMismatchError(DigitPassError):
    """Array or image dimensions do not match what the operation requires."""


class EmptyDatasetError(DigitPassError):
    """An operation that needs at least one sample received none."""


class EmptyAllowedSetError(DigitPassError):
    """Restricted prediction was given an empty candidate label set."""


class SameLabelError(DigitPassError):
    """A mutual-confusion query needs two distinct labels."""


class LabelOutsideGroupError(DigitPassError):
    """A sample's label is not a member of the group being fitted."""


class BadMagicError(DigitPassError):
    """IDX file magic number does not match the expected record type."""


class CountMismatchError(DigitPassError):
    """Image and label files disagree on the number of records."""


class TruncatedFileError(DigitPassError):
    """File ended before the declared payload was read."""


class MissingRootError(DigitPassError):
    """Dataset root directory does not exist."""


class NoSamplesError(DigitPassError):
    """Dataset location exists but holds no loadable samples."""


class ConfigError(DigitPassError):
    """Run configuration is malformed or inconsistent."""


class ModelIntegrityError(DigitPassError):
    """Model document failed its version or digest check."""
