"""Error taxonomy shared by the library and the command line front end.

The split mirrors the exit codes: configuration mistakes are the
caller's problem, data errors live in the input files, and invariant
violations indicate a bug in this package.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad parameter values or unusable combinations."""


class DataError(ValueError):
    """Invalid input data: malformed CSV, schema mismatch, unparseable cells."""


class InvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not user error."""
