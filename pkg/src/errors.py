"""Exception hierarchy shared by the pipeline stages."""

from typing import Iterable, List, Optional


class SyntheticStationError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SyntheticStationError, ValueError):
    """Inputs, configuration or recipe values are invalid."""


class OutOfAreaError(ValidationError):
    """A coordinate falls outside the study-area mask."""


class RecipeError(ValidationError):
    """A recipe line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ProfileNotNormalizedError(ValidationError):
    """A travel profile does not sum to one."""


class InconsistentMarginalsError(ValidationError):
    """Marginal totals differ between dimensions of one region."""


class UnfittableCategoryError(ValidationError):
    """A constraint category has no supporting respondent in the seed."""


class EmptySplitError(ValidationError):
    """A temporal split or fold ended up with no rows."""


class SchemaMismatchError(ValidationError):
    """Feature rows do not match the schema a model was trained on."""


class UndefinedMetricError(ValidationError):
    """A metric is undefined for the given input (too short or constant)."""


class DataGapError(SyntheticStationError):
    """Some requested keys have no data in at least one dataset family."""

    def __init__(self, message: str, offenders: Optional[Iterable] = None):
        self.offenders: List = list(offenders or [])
        if self.offenders:
            preview = ", ".join(str(o) for o in self.offenders[:10])
            more = len(self.offenders) - 10
            suffix = f" (+{more} more)" if more > 0 else ""
            message = f"{message}: {preview}{suffix}"
        super().__init__(message)


class UnknownRegionError(DataGapError):
    """A cell or lookup refers to a region with no traffic or profile data."""


class LeakageError(SyntheticStationError):
    """Training and evaluation rows overlap."""


class TrialFailedError(SyntheticStationError):
    """Every hyperparameter trial failed."""
