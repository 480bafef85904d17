"""Exception types shared across the pipeline.

Numerical operations raise plain ``ValueError`` with the documented
message; these classes exist for conditions the command layer maps to
distinct exit codes.
"""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(Exception):
    """Unreadable or malformed input data (exit code 3)."""


class ArtifactMismatchError(Exception):
    """Stored artifacts were produced under a different config (exit code 4)."""
