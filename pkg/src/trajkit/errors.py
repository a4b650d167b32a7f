"""Exception taxonomy shared by the library and the CLI.

Each class maps to one CLI exit code so that scripts can dispatch on
failure class without parsing messages.
"""


class TrajkitError(Exception):
    """Base class for all trajkit errors."""

    exit_code = 1


class ConfigError(TrajkitError):
    """Bad configuration: unknown keys, out-of-range values, parse failures."""

    exit_code = 2


class NumericsError(TrajkitError):
    """Numerical failure: divergence, non-finite states, singular guidance."""

    exit_code = 3


class MissingArtifactError(TrajkitError):
    """A required input file (checkpoint, dataset) does not exist."""

    exit_code = 4


class CheckpointError(TrajkitError):
    """Corrupt, truncated, or version-incompatible checkpoint file."""

    exit_code = 5
