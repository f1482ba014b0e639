"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 1, data/corpus problems with 2, numerical failures with 3.
"""


class SedclError(Exception):
    """Base class for all package-specific errors."""


class AnnotationError(SedclError):
    """Malformed annotation, meta, or vocabulary input."""


class ConfigError(SedclError):
    """Invalid or inconsistent configuration."""


class DataError(SedclError):
    """Corpus, feature, or checkpoint inconsistency."""


class ShapeError(SedclError):
    """Tensor shape mismatch in a numeric operation."""


class NumericalError(SedclError):
    """Non-finite value produced during computation."""
