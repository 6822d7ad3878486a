"""Exception hierarchy shared across the package.

The CLI maps every AvFusionError subclass to exit status 1; usage errors
(bad flags) are argparse's exit status 2.
"""


class AvFusionError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AvFusionError):
    """Operands have incompatible or invalid matrix shapes."""


class NumericError(AvFusionError):
    """A computation produced or received non-finite values."""


class ConfigError(AvFusionError):
    """Invalid configuration value or unknown configuration key."""


class DataError(AvFusionError):
    """Invalid dataset content (labels, manifests, segmentation input)."""


class FormatError(AvFusionError):
    """A binary or text file does not conform to its declared format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """File declares an unsupported format version."""


class TruncatedFileError(FormatError):
    """File ends before its declared payload is complete."""


class DegenerateCccError(AvFusionError):
    """CCC denominator vanished on a training batch (constant signals)."""


class DivergenceError(AvFusionError):
    """Training produced a non-finite loss or gradient."""
