"""Exception and warning types used across fieldcast."""


class FieldcastError(Exception):
    """Base class for all fieldcast errors."""


class DomainError(FieldcastError, ValueError):
    """A point lies outside the basis domain, or a knot range is invalid."""


class ConfigError(FieldcastError, ValueError):
    """A configuration value is out of range or an unknown key was given."""


class InsufficientDataError(FieldcastError, ValueError):
    """Too few observations for the requested operation."""


class DegenerateDesignError(FieldcastError, ValueError):
    """All observations are collocated; the surface fit is meaningless."""


class RankDeficientDesignError(FieldcastError, ValueError):
    """The projection design has rank below the number of basis functions."""


class DegenerateSeriesError(FieldcastError, ValueError):
    """A constant series was given where variation is required."""


class AlignmentError(FieldcastError, ValueError):
    """Dates or locations of two inputs do not line up."""


class IngestError(FieldcastError, ValueError):
    """The input table cannot be read: malformed rows, unknown horizon, or
    an empty selection."""


class ArtifactError(FieldcastError, ValueError):
    """A model artifact is missing, corrupt, or self-inconsistent."""


class FitWarning(UserWarning):
    """Non-fatal condition during model fitting (short series, boundary
    solution, non-convergence)."""
