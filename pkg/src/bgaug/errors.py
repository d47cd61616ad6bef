"""Exception types shared across the package.

The CLI maps these to exit codes: configuration problems exit 2, bad data or
malformed files exit 3, and ``OSError`` exits 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (bad flags, empty pool, missing masks)."""


class DataError(Exception):
    """Input data that cannot be processed (empty joins, degenerate targets)."""


class FormatError(DataError):
    """A file decoded but does not have the expected layout or dimensions."""


class DegenerateTargetError(DataError):
    """A regression target has zero variance, so R² is undefined."""
