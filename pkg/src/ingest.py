"""CSV readers for the documented input schemas and target-vector cleaning."""

import logging
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ValidationError
from .schema import LAND_USE_CLASSES, LAND_USE_PIXEL_SIZE_M, POLLUTANTS

logger = logging.getLogger(__name__)

MEASUREMENT_COLUMNS = ["station_id", "pollutant", "timestamp", "value"]
STATION_COLUMNS = ["station_id", "name", "environment_class", "x", "y"]
LAND_USE_COLUMNS = [f"class_{i:02d}" for i in range(len(LAND_USE_CLASSES))]


def read_csv_checked(path: Path, required: Sequence[str], **kwargs) -> pd.DataFrame:
    """
    Read a CSV file and check that the required columns are present.

    Args:
        path: CSV file path
        required: Column names that must exist
        **kwargs: Passed through to pandas.read_csv

    Returns:
        The loaded frame

    Raises:
        ValidationError: If the file is missing or lacks a column
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Input file {path} does not exist")
    kwargs.setdefault("float_precision", "round_trip")
    frame = pd.read_csv(path, **kwargs)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path.name} is missing columns: {', '.join(missing)}")
    return frame


def parse_timestamps(values: pd.Series) -> pd.Series:
    """Parse ISO-8601 strings to timezone-naive UTC timestamps."""
    try:
        parsed = pd.to_datetime(values, utc=True)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"Unparseable timestamp: {e}") from e
    return parsed.dt.tz_localize(None)


def format_timestamps(timestamps: Sequence[pd.Timestamp]) -> np.ndarray:
    """Format UTC timestamps as ISO-8601 strings with a Z suffix."""
    return np.asarray(pd.DatetimeIndex(timestamps).strftime("%Y-%m-%dT%H:%M:%SZ"))


def read_measurements(path: Path) -> pd.DataFrame:
    """Load the measurements file (station_id, pollutant, timestamp_iso8601, value)."""
    frame = read_csv_checked(
        path,
        ["station_id", "pollutant", "timestamp_iso8601", "value"],
        dtype={"station_id": str, "pollutant": str},
    )
    unknown = sorted(set(frame["pollutant"]) - set(POLLUTANTS))
    if unknown:
        raise ValidationError(f"Unknown pollutants in {Path(path).name}: {unknown}")
    frame["timestamp"] = parse_timestamps(frame["timestamp_iso8601"])
    frame["value"] = frame["value"].astype(np.float64)
    return frame[MEASUREMENT_COLUMNS].reset_index(drop=True)


def clean_measurements(raw: pd.DataFrame) -> Tuple[pd.DataFrame, Dict[str, int]]:
    """
    Remove negative measurements from the target vector.

    Surviving rows keep their order and their values untouched.

    Args:
        raw: Measurement frame

    Returns:
        Tuple of (kept frame, removed count per pollutant)
    """
    if raw.empty:
        return raw.copy(), {}
    negative = raw["value"].to_numpy() < 0
    removed = raw.loc[negative, "pollutant"].value_counts().sort_index()
    removed_counts = {str(k): int(v) for k, v in removed.items()}
    for pollutant, count in removed_counts.items():
        logger.warning(f"Removed {count} negative {pollutant} measurements")
    return raw.loc[~negative].copy(), removed_counts


def read_stations(path: Path) -> pd.DataFrame:
    """Load the stations file (station_id, name, environment_class, x, y)."""
    frame = read_csv_checked(path, STATION_COLUMNS, dtype={"station_id": str, "name": str})
    if frame["station_id"].duplicated().any():
        dupes = frame.loc[frame["station_id"].duplicated(), "station_id"].tolist()
        raise ValidationError(f"Duplicate station ids: {dupes}")
    return frame[STATION_COLUMNS]


def read_regions(path: Path) -> pd.Series:
    """Load the cell-to-region membership file as a Series indexed by cell_id."""
    frame = read_csv_checked(path, ["cell_id", "region_id"], dtype={"region_id": str})
    if frame["cell_id"].duplicated().any():
        raise ValidationError("Region membership lists a cell more than once")
    return frame.set_index("cell_id")["region_id"].sort_index()


def pixels_per_cell(cell_size: float) -> int:
    """Number of 25 m land-cover pixels inside a square cell."""
    per_side = cell_size / LAND_USE_PIXEL_SIZE_M
    if abs(per_side - round(per_side)) > 1e-9:
        raise ValidationError(f"Cell size {cell_size} is not a multiple of the land-cover pixel size")
    return int(round(per_side)) ** 2


def read_land_use(path: Path, cell_size: float = 1000.0) -> pd.DataFrame:
    """
    Load per-cell land-cover pixel counts.

    Args:
        path: CSV with cell_id, class_00 ... class_21
        cell_size: Grid cell size, used to check the pixel total

    Returns:
        Frame indexed by cell_id with one integer column per land-cover class

    Raises:
        ValidationError: On negative counts or totals that differ from the
            pixels-per-cell constant
    """
    frame = read_csv_checked(path, ["cell_id"] + LAND_USE_COLUMNS)
    counts = frame.set_index("cell_id")[LAND_USE_COLUMNS].sort_index()
    if (counts.to_numpy() < 0).any():
        raise ValidationError("Land-use pixel counts must be nonnegative")
    expected = pixels_per_cell(cell_size)
    totals = counts.sum(axis=1)
    bad = totals.index[totals != expected].tolist()
    if bad:
        raise ValidationError(f"Land-use counts do not sum to {expected} pixels for cells {bad[:10]}")
    counts.columns = list(LAND_USE_CLASSES)
    return counts.astype(np.int64)


def majority_land_use(profile: pd.DataFrame) -> pd.Series:
    """Dominant land-cover class per cell (first class wins ties)."""
    return profile.idxmax(axis=1)
