"""Remote-sensing family: monthly composites with neighbourhood gap filling."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataGapError, ValidationError
from .grid import StudyArea
from .ingest import read_csv_checked
from .schema import REMOTE_SENSING_VARIABLES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemoteSensingComposite:
    """
    Gap-free monthly composites.

    values has shape (12 months, n_cells, 5 variables). missing_counts holds,
    per variable (rows) and month (columns 1..12), how many cells had no
    sample before gap filling.
    """

    values: np.ndarray
    missing_counts: pd.DataFrame

    def lookup(self, cell_index: np.ndarray, timestamps: pd.DatetimeIndex) -> np.ndarray:
        """Composite for each (cell, timestamp) pair, backfilled by calendar month."""
        months = np.asarray(pd.DatetimeIndex(timestamps).month) - 1
        return self.values[months, np.asarray(cell_index, dtype=np.int64)]


def read_remote_sensing(path: Path) -> pd.DataFrame:
    """Load the pre-gridded remote-sensing samples (variable, cell_id, month, value)."""
    frame = read_csv_checked(path, ["variable", "cell_id", "month", "value"], dtype={"variable": str})
    unknown = sorted(set(frame["variable"]) - set(REMOTE_SENSING_VARIABLES))
    if unknown:
        raise ValidationError(f"Unknown remote-sensing variables: {unknown}")
    if not frame["month"].between(1, 12).all():
        raise ValidationError("Remote-sensing months must be in 1..12")
    return frame


def fill_from_neighbours(raster: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """
    Fill NaN cells inside the mask from their 8-neighbourhood means.

    Each pass fills every missing cell that has at least one valued
    neighbour, using only values from before the pass. Passes repeat until
    the raster is complete.

    Args:
        raster: 2-D array with NaN for missing values
        inside: Boolean raster, True for cells that must end up with a value

    Returns:
        Filled copy of the raster

    Raises:
        DataGapError: If some missing cells have no valued cell reachable
    """
    filled = np.array(raster, dtype=np.float64, copy=True)
    height, width = filled.shape
    while True:
        missing = inside & np.isnan(filled)
        if not missing.any():
            return filled
        padded = np.pad(filled, 1, constant_values=np.nan)
        total = np.zeros_like(filled)
        count = np.zeros_like(filled)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                window = padded[1 + dr : 1 + dr + height, 1 + dc : 1 + dc + width]
                valid = ~np.isnan(window)
                total += np.where(valid, window, 0.0)
                count += valid
        fillable = missing & (count > 0)
        if not fillable.any():
            raise DataGapError(f"{int(missing.sum())} cells cannot be reached by neighbourhood filling")
        filled[fillable] = total[fillable] / count[fillable]


def monthly_composite(samples: pd.DataFrame, area: StudyArea) -> RemoteSensingComposite:
    """
    Average samples per (cell, month) and gap-fill missing cells.

    Args:
        samples: Columns variable, cell_id, month, value
        area: Study area

    Returns:
        RemoteSensingComposite covering every cell and month

    Raises:
        DataGapError: If a variable has no samples at all in some month
    """
    n_cells = len(area)
    values = np.empty((12, n_cells, len(REMOTE_SENSING_VARIABLES)), dtype=np.float64)
    missing = pd.DataFrame(0, index=list(REMOTE_SENSING_VARIABLES), columns=range(1, 13))
    inside = ~np.isnan(area.to_raster(np.zeros(n_cells)))

    known = samples[samples["cell_id"].between(0, n_cells - 1)]
    means = known.groupby(["variable", "month", "cell_id"])["value"].mean()
    for v, variable in enumerate(REMOTE_SENSING_VARIABLES):
        for month in range(1, 13):
            try:
                month_means = means.loc[(variable, month)]
            except KeyError:
                raise DataGapError(f"No {variable} samples in month {month}; cannot composite") from None
            cell_values = np.full(n_cells, np.nan)
            cell_values[month_means.index.to_numpy(dtype=np.int64)] = month_means.to_numpy()
            gaps = int(np.isnan(cell_values).sum())
            missing.loc[variable, month] = gaps
            if gaps:
                logger.warning(f"Gap-filling {gaps} cells for {variable} month {month}")
                raster = fill_from_neighbours(area.to_raster(cell_values), inside)
                cell_values = area.from_raster(raster)
            values[month - 1, :, v] = cell_values
    return RemoteSensingComposite(values=values, missing_counts=missing)
