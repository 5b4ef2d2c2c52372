"""Exception and warning types shared across the package."""


class ScatteringError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class GridError(ValueError):
    """Invalid grid or mismatched sampled data."""


class InvalidDataError(ScatteringError):
    """Scattering data that violate a physical precondition (e.g. |s12| >= 1)."""


class SolverError(ScatteringError):
    """An integrator or linear solve did not produce a trustworthy answer."""


class ScatteringWarning(UserWarning):
    """Non-fatal numerical condition worth recording in a run manifest."""
