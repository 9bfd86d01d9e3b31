"""Meteorology family: inverse-distance-weighted interpolation of point samples."""

import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .errors import DataGapError, ValidationError
from .grid import StudyArea
from .ingest import parse_timestamps, read_csv_checked
from .schema import MET_VARIABLES

logger = logging.getLogger(__name__)

EXACT_DISTANCE_M = 1e-9
DEFAULT_POWER = 2.0
DEFAULT_NEIGHBOURS = 8


def idw_weights(
    sample_xy: np.ndarray,
    targets: np.ndarray,
    power: float = DEFAULT_POWER,
    k_neighbors: int = DEFAULT_NEIGHBOURS,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Neighbour indices and normalised inverse-distance weights.

    A target closer than 1e-9 m to a sample takes that sample's value
    exactly (weight 1 on it, 0 elsewhere).

    Args:
        sample_xy: (n, 2) sample coordinates
        targets: (m, 2) target coordinates
        power: Distance exponent
        k_neighbors: Number of nearest samples used

    Returns:
        Tuple of (indices (m, k), weights (m, k)) with k = min(k_neighbors, n)
    """
    sample_xy = np.asarray(sample_xy, dtype=np.float64).reshape(-1, 2)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if sample_xy.shape[0] == 0:
        raise ValidationError("IDW needs at least one sample")
    if not power > 0:
        raise ValidationError(f"IDW power must be positive, got {power}")

    k = min(int(k_neighbors), sample_xy.shape[0])
    dist, idx = cKDTree(sample_xy).query(targets, k=k)
    dist = np.asarray(dist, dtype=np.float64).reshape(targets.shape[0], k)
    idx = np.asarray(idx, dtype=np.int64).reshape(targets.shape[0], k)

    exact = dist[:, 0] < EXACT_DISTANCE_M
    with np.errstate(divide="ignore"):
        inv = 1.0 / dist[~exact] ** power
    weights = np.zeros_like(dist)
    weights[~exact] = inv / inv.sum(axis=1, keepdims=True)
    weights[exact, 0] = 1.0
    return idx, weights


def weighted_sum(gathered: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Row-wise weighted sum of (m, k) neighbour values.

    Accumulated column by column so each row's result depends only on that
    row, whatever the batch it is computed in.
    """
    out = weights[:, 0] * gathered[:, 0]
    for j in range(1, weights.shape[1]):
        out = out + weights[:, j] * gathered[:, j]
    return out


def idw_interpolate(
    sample_xy: np.ndarray,
    sample_values: np.ndarray,
    centroids: np.ndarray,
    power: float = DEFAULT_POWER,
    k_neighbors: int = DEFAULT_NEIGHBOURS,
) -> np.ndarray:
    """
    Interpolate one timestamp's samples onto centroids.

    Args:
        sample_xy: (n, 2) sample coordinates
        sample_values: (n,) sample values
        centroids: (m, 2) target coordinates
        power: Distance exponent (default 2)
        k_neighbors: Number of nearest samples (default 8)

    Returns:
        (m,) interpolated values
    """
    idx, weights = idw_weights(sample_xy, centroids, power, k_neighbors)
    return weighted_sum(np.asarray(sample_values, dtype=np.float64)[idx], weights)


class MeteorologyField:
    """
    Interpolated meteorology for every cell and sampled timestamp.

    Samples are pivoted to a (timestamp x sample point) table per variable.
    Timestamps where every point reports share one cached weight set; other
    timestamps get weights for their own subset of points.
    """

    def __init__(
        self,
        samples: pd.DataFrame,
        area: StudyArea,
        power: float = DEFAULT_POWER,
        k_neighbors: int = DEFAULT_NEIGHBOURS,
    ):
        """
        Initialize the field.

        Args:
            samples: Columns variable, x, y, timestamp, value
            area: Study area whose centroids are interpolated
            power: IDW distance exponent
            k_neighbors: IDW neighbour count
        """
        unknown = sorted(set(samples["variable"]) - set(MET_VARIABLES))
        if unknown:
            raise ValidationError(f"Unknown meteorological variables: {unknown}")
        self.area = area
        self.power = power
        self.k_neighbors = k_neighbors

        points = samples[["x", "y"]].drop_duplicates().sort_values(["x", "y"]).reset_index(drop=True)
        self.points = points.to_numpy(dtype=np.float64)
        point_index = pd.MultiIndex.from_frame(points)
        self.timestamps = pd.DatetimeIndex(sorted(samples["timestamp"].unique()))

        self._grids: Dict[str, np.ndarray] = {}
        for variable in MET_VARIABLES:
            part = samples[samples["variable"] == variable]
            table = part.pivot_table(index="timestamp", columns=["x", "y"], values="value", aggfunc="mean")
            table = table.reindex(index=self.timestamps, columns=point_index)
            self._grids[variable] = table.to_numpy(dtype=np.float64)

        self._idx, self._weights = idw_weights(self.points, area.centroids, power, k_neighbors)
        self._subset_cache: Dict[bytes, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        logger.debug(
            f"Meteorology field: {len(self.points)} sample points, {len(self.timestamps)} timestamps"
        )

    def _subset_weights(self, present: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        key = present.tobytes()
        if key not in self._subset_cache:
            columns = np.flatnonzero(present)
            idx, weights = idw_weights(self.points[columns], self.area.centroids, self.power, self.k_neighbors)
            self._subset_cache[key] = (columns, idx, weights)
        return self._subset_cache[key]

    def values(self, cell_index: np.ndarray, timestamps: pd.DatetimeIndex) -> np.ndarray:
        """
        Interpolated values for aligned (cell, timestamp) pairs.

        Args:
            cell_index: Cell ids, one per row
            timestamps: Timestamps, one per row

        Returns:
            (n, 11) array in MET_VARIABLES order

        Raises:
            DataGapError: If a timestamp has no samples for some variable
        """
        cell_index = np.asarray(cell_index, dtype=np.int64)
        t_pos = self.timestamps.get_indexer(pd.DatetimeIndex(timestamps))
        if (t_pos < 0).any():
            missing = sorted(set(pd.DatetimeIndex(timestamps)[t_pos < 0]))
            raise DataGapError("No meteorology samples for timestamps", offenders=missing)

        out = np.empty((cell_index.shape[0], len(MET_VARIABLES)), dtype=np.float64)
        for v, variable in enumerate(MET_VARIABLES):
            grid = self._grids[variable]
            present = ~np.isnan(grid)
            complete = present.all(axis=1)
            row_complete = complete[t_pos]

            rows = np.flatnonzero(row_complete)
            if rows.size:
                idx = self._idx[cell_index[rows]]
                weights = self._weights[cell_index[rows]]
                out[rows, v] = weighted_sum(grid[t_pos[rows][:, None], idx], weights)

            for t in np.unique(t_pos[~row_complete]):
                if not present[t].any():
                    raise DataGapError(
                        f"No {variable} samples at timestamp", offenders=[self.timestamps[t]]
                    )
                columns, idx_all, w_all = self._subset_weights(present[t])
                rows = np.flatnonzero(t_pos == t)
                idx = idx_all[cell_index[rows]]
                weights = w_all[cell_index[rows]]
                out[rows, v] = weighted_sum(grid[t, columns][idx], weights)
        return out


def read_met_samples(path: Path) -> pd.DataFrame:
    """Load the meteorology samples file (variable, x, y, timestamp, value)."""
    frame = read_csv_checked(path, ["variable", "x", "y", "timestamp", "value"], dtype={"variable": str})
    frame["timestamp"] = parse_timestamps(frame["timestamp"])
    return frame
