"""Emissions family: annual sector maps scaled to the hour of interest."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataGapError, ValidationError
from .grid import StudyArea
from .ingest import read_csv_checked
from .schema import EMISSION_SPECIES, SNAP_SECTORS

logger = logging.getLogger(__name__)

WEEK_HOURS = 168


def week_hour(timestamps: pd.DatetimeIndex) -> np.ndarray:
    """day_of_week * 24 + hour, Monday 00:00 = 0."""
    timestamps = pd.DatetimeIndex(timestamps)
    return np.asarray(timestamps.dayofweek) * 24 + np.asarray(timestamps.hour)


@dataclass(frozen=True)
class EmissionsMap:
    """
    Annual emissions per (species, sector, cell) with temporal scaling tables.

    annual: (7 species, 11 sectors, n_cells)
    hour_factor: (11 sectors, 168 week-hours), mean 1 per sector
    month_factor: (7 species, 11 sectors, 12 months), mean 1 per species/sector
    """

    annual: np.ndarray
    hour_factor: np.ndarray
    month_factor: np.ndarray

    def __post_init__(self):
        n_species, n_sectors = len(EMISSION_SPECIES), len(SNAP_SECTORS)
        if self.annual.shape[:2] != (n_species, n_sectors):
            raise ValidationError(f"Annual emissions shape {self.annual.shape} is not (7, 11, cells)")
        if self.hour_factor.shape != (n_sectors, WEEK_HOURS):
            raise DataGapError(f"Hour scaling table shape {self.hour_factor.shape} is not (11, 168)")
        if self.month_factor.shape != (n_species, n_sectors, 12):
            raise DataGapError(f"Month scaling table shape {self.month_factor.shape} is not (7, 11, 12)")
        if (self.annual < 0).any():
            raise ValidationError("Annual emissions must be nonnegative")

    def lookup(self, cell_index: np.ndarray, timestamps: pd.DatetimeIndex) -> np.ndarray:
        """
        Scaled emissions for aligned (cell, timestamp) pairs.

        Returns:
            (n, 77) array, species-major then sector
        """
        cell_index = np.asarray(cell_index, dtype=np.int64)
        timestamps = pd.DatetimeIndex(timestamps)
        wh = week_hour(timestamps)
        month = np.asarray(timestamps.month) - 1
        annual = np.moveaxis(self.annual[:, :, cell_index], 2, 0)
        factor = self.hour_factor.T[wh][:, None, :] * np.moveaxis(self.month_factor[:, :, month], 2, 0)
        scaled = annual * factor
        return scaled.reshape(cell_index.shape[0], -1)


def scale_emissions(emissions: EmissionsMap, timestamp: pd.Timestamp) -> np.ndarray:
    """
    Instantaneous emissions for every cell at one timestamp.

    value = annual * hour_factor[sector][week_hour] * month_factor[species][sector][month]

    Args:
        emissions: Emissions map with normalised scaling tables
        timestamp: Hour of interest

    Returns:
        (7, 11, n_cells) array
    """
    wh = int(timestamp.dayofweek) * 24 + int(timestamp.hour)
    month = int(timestamp.month) - 1
    factor = emissions.hour_factor[:, wh][None, :] * emissions.month_factor[:, :, month]
    return emissions.annual * factor[:, :, None]


def normalise_to_unit_mean(table: np.ndarray) -> np.ndarray:
    """Divide each last-axis profile by its mean."""
    means = table.mean(axis=-1, keepdims=True)
    if (means <= 0).any():
        raise ValidationError("Scaling profiles must have a positive mean")
    return table / means


def read_emissions(
    annual_path: Path,
    hour_factor_path: Path,
    month_factor_path: Path,
    area: StudyArea,
) -> EmissionsMap:
    """
    Load annual emissions and scaling tables.

    Cells absent from the annual file have zero emissions. Scaling tables
    must cover every sector x week-hour and species x sector x month entry;
    they are renormalised to mean 1.

    Args:
        annual_path: CSV species, snap_sector, cell_id, annual_value
        hour_factor_path: CSV snap_sector, week_hour, factor
        month_factor_path: CSV species, snap_sector, month, factor
        area: Study area

    Returns:
        EmissionsMap
    """
    annual_frame = read_csv_checked(
        annual_path, ["species", "snap_sector", "cell_id", "annual_value"], dtype={"species": str}
    )
    unknown = sorted(set(annual_frame["species"]) - set(EMISSION_SPECIES))
    if unknown:
        raise ValidationError(f"Unknown emission species: {unknown}")
    annual_frame = annual_frame[annual_frame["cell_id"].between(0, len(area) - 1)]
    annual = np.zeros((len(EMISSION_SPECIES), len(SNAP_SECTORS), len(area)), dtype=np.float64)
    species_idx = annual_frame["species"].map({s: i for i, s in enumerate(EMISSION_SPECIES)}).to_numpy()
    sector_idx = annual_frame["snap_sector"].to_numpy(dtype=np.int64) - 1
    if ((sector_idx < 0) | (sector_idx >= len(SNAP_SECTORS))).any():
        raise ValidationError("SNAP sectors must be in 1..11")
    np.add.at(
        annual,
        (species_idx, sector_idx, annual_frame["cell_id"].to_numpy(dtype=np.int64)),
        annual_frame["annual_value"].to_numpy(dtype=np.float64),
    )

    hour_frame = read_csv_checked(hour_factor_path, ["snap_sector", "week_hour", "factor"])
    hour = (
        hour_frame.pivot_table(index="snap_sector", columns="week_hour", values="factor", aggfunc="mean")
        .reindex(index=list(SNAP_SECTORS), columns=range(WEEK_HOURS))
        .to_numpy(dtype=np.float64)
    )
    if np.isnan(hour).any():
        raise DataGapError("Hour scaling table is missing sector/week-hour entries")

    month_frame = read_csv_checked(
        month_factor_path, ["species", "snap_sector", "month", "factor"], dtype={"species": str}
    )
    month_table = month_frame.pivot_table(
        index=["species", "snap_sector"], columns="month", values="factor", aggfunc="mean"
    )
    full_index = pd.MultiIndex.from_product([list(EMISSION_SPECIES), list(SNAP_SECTORS)])
    month = month_table.reindex(index=full_index, columns=range(1, 13)).to_numpy(dtype=np.float64)
    if np.isnan(month).any():
        raise DataGapError("Month scaling table is missing species/sector/month entries")
    month = month.reshape(len(EMISSION_SPECIES), len(SNAP_SECTORS), 12)

    return EmissionsMap(
        annual=annual,
        hour_factor=normalise_to_unit_mean(hour),
        month_factor=normalise_to_unit_mean(month),
    )
