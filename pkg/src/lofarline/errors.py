"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
configuration/data problems exit 2, numeric failures exit 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or inconsistent layer/shape chain."""


class DataFormatError(ValueError):
    """Corrupt or mismatching on-disk artifact (tensor file, manifest, checkpoint)."""


class MetricError(ValueError):
    """Metric preconditions violated (e.g. single-class ROC input)."""


class NumericError(RuntimeError):
    """Non-finite loss/gradient or a failed numerical check."""
