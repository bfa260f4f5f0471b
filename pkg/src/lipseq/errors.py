"""Error taxonomy shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class ConfigError(Exception):
    """Invalid configuration: unknown preset, bad field value, incompatible checkpoint."""


class DataError(Exception):
    """Invalid data: malformed manifest, unknown phoneme, infeasible CTC pair."""


class NumericError(Exception):
    """Numeric failure: non-finite values where finiteness is required."""
