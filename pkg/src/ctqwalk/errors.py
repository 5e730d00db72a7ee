"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config -> 1, dataset -> 2,
numeric -> 3), so every raising site should pick the matching class.
"""


class ContractViolation(ValueError):
    """An operation was called outside its documented contract."""


class ConfigError(ValueError):
    """Invalid run, model or fold configuration."""


class DatasetError(ValueError):
    """Missing or malformed dataset files."""


class NumericError(RuntimeError):
    """NaN/Inf encountered or an iterative routine failed to converge."""
