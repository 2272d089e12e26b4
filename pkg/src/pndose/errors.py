"""Exception hierarchy mapped to CLI exit categories."""


class PnDoseError(Exception):
    """Base class; exit_code drives the CLI return value."""

    exit_code = 1


class ConfigError(PnDoseError):
    """Invalid configuration or unusable problem setup."""

    exit_code = 2


class PhysicsDataError(PnDoseError):
    """Bad or out-of-range physics data (tables, material input)."""

    exit_code = 3


class NumericalError(PnDoseError):
    """Numerical failure: non-convergence, singular solve, blowup."""

    exit_code = 4


class OutputIOError(PnDoseError):
    """Unwritable or unreadable output/input paths."""

    exit_code = 5
