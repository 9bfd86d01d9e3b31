"""Feature store: aligns every dataset family to (cell, timestamp) rows."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .emissions import EmissionsMap, read_emissions
from .errors import DataGapError, ValidationError
from .grid import StudyArea, load_study_area
from .ingest import read_land_use, read_regions
from .meteorology import MeteorologyField, read_met_samples
from .remote_sensing import RemoteSensingComposite, monthly_composite, read_remote_sensing
from .schema import FEATURE_COLUMNS, FEATURE_NAMES, FeatureColumn, schema_hash
from .transport import (
    TrafficMeans,
    TravelProfiles,
    day_kind_index,
    read_roads,
    read_traffic_means,
    read_travel_profiles,
    road_structural_features,
    traffic_scores,
)

logger = logging.getLogger(__name__)

INPUT_FILES = {
    "study_area": "study_area.csv",
    "stations": "stations.csv",
    "measurements": "measurements.csv",
    "regions": "regions.csv",
    "traffic_means": "traffic_means.csv",
    "travel_profiles": "travel_profiles.csv",
    "met_samples": "met_samples.csv",
    "remote_sensing": "remote_sensing.csv",
    "emissions": "emissions.csv",
    "emissions_hour_factors": "emissions_hour_factors.csv",
    "emissions_month_factors": "emissions_month_factors.csv",
    "land_use": "land_use.csv",
}
ROADS_PATTERN = "roads_*.csv"


def temporal_features(timestamp: pd.Timestamp) -> Tuple[int, int, int, int]:
    """
    Calendar decomposition of a UTC hour.

    Returns:
        (hour 0-23, day_of_week 0-6 with Monday = 0, ISO week 1-53, month 1-12)
    """
    timestamp = pd.Timestamp(timestamp)
    return (
        int(timestamp.hour),
        int(timestamp.dayofweek),
        int(timestamp.isocalendar()[1]),
        int(timestamp.month),
    )


def temporal_matrix(timestamps: pd.DatetimeIndex) -> np.ndarray:
    """Vectorised temporal_features as an (n, 4) float array."""
    timestamps = pd.DatetimeIndex(timestamps)
    return np.column_stack(
        [
            np.asarray(timestamps.hour, dtype=np.float64),
            np.asarray(timestamps.dayofweek, dtype=np.float64),
            timestamps.isocalendar()["week"].to_numpy(dtype=np.float64),
            np.asarray(timestamps.month, dtype=np.float64),
        ]
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows aligned to (cell_id, timestamp) keys, in canonical column order."""

    values: np.ndarray
    cell_ids: np.ndarray
    timestamps: pd.DatetimeIndex
    columns: Tuple[FeatureColumn, ...] = FEATURE_COLUMNS

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.names)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.names)
        frame.insert(0, "timestamp", self.timestamps)
        frame.insert(0, "cell_id", self.cell_ids)
        return frame


def grid_keys(cell_ids: Iterable[int], timestamps: Iterable[pd.Timestamp]) -> List[Tuple[int, pd.Timestamp]]:
    """Cell-major Cartesian product of cells and timestamps."""
    timestamps = list(pd.DatetimeIndex(list(timestamps)))
    return [(int(c), t) for c in cell_ids for t in timestamps]


class FeatureStore:
    """
    Read-only view over every dataset family of one study area.

    Static families are precomputed per cell at construction; time-varying
    families are evaluated lazily for the rows requested.
    """

    def __init__(
        self,
        area: StudyArea,
        road_features: Dict[int, pd.DataFrame],
        regions: pd.Series,
        traffic_means: TrafficMeans,
        travel_profiles: TravelProfiles,
        meteorology: MeteorologyField,
        remote_sensing: RemoteSensingComposite,
        emissions: EmissionsMap,
        land_use: pd.DataFrame,
    ):
        """
        Initialize the store.

        Args:
            area: Study area
            road_features: Structural road features per snapshot year
            regions: region_id per cell_id
            traffic_means: Regional traffic means
            travel_profiles: Regional travel profiles
            meteorology: Interpolated meteorology field
            remote_sensing: Monthly remote-sensing composites
            emissions: Emissions map
            land_use: Land-use pixel counts per cell_id
        """
        self.area = area
        self.meteorology = meteorology
        self.remote_sensing = remote_sensing
        self.emissions = emissions
        n = len(area)

        self._road_years = sorted(road_features)
        self._structural: Dict[int, np.ndarray] = {}
        self._traffic: Dict[int, np.ndarray] = {}
        for year in self._road_years:
            frame = road_features[year].reindex(area.cell_ids)
            self._structural[year] = frame.to_numpy(dtype=np.float64)
            self._traffic[year] = traffic_scores(frame, regions, traffic_means).to_numpy(dtype=np.float64)

        region_ids = sorted(set(regions.dropna().astype(str)))
        self._profiles = np.stack([travel_profiles.profile(r) for r in region_ids]) if region_ids else None
        position = {r: i for i, r in enumerate(region_ids)}
        self._region_index = np.full(n, -1, dtype=np.int64)
        for cell_id, region_id in regions.items():
            if 0 <= int(cell_id) < n:
                self._region_index[int(cell_id)] = position[str(region_id)]

        land = land_use.reindex(area.cell_ids)
        self._has_land_use = ~land.isna().any(axis=1).to_numpy()
        self._land_use = land.to_numpy(dtype=np.float64)

    @property
    def road_years(self) -> List[int]:
        return list(self._road_years)

    def rows(self, cell_ids: Sequence[int], timestamps: Sequence[pd.Timestamp]) -> np.ndarray:
        """
        Feature rows for aligned (cell, timestamp) pairs.

        Args:
            cell_ids: Cell id per row
            timestamps: Timestamp per row

        Returns:
            (n, 152) array in canonical column order

        Raises:
            DataGapError: If any family lacks a requested cell or timestamp
        """
        cells = self.area.index_of(cell_ids)
        stamps = pd.DatetimeIndex(timestamps)
        if cells.shape[0] != len(stamps):
            raise ValidationError("cell_ids and timestamps must have the same length")
        self._check_gaps(cells, stamps)

        years = np.asarray(stamps.year)
        structural = np.empty((cells.shape[0], 28), dtype=np.float64)
        daily = np.empty((cells.shape[0], 5), dtype=np.float64)
        for year in np.unique(years):
            rows = years == year
            structural[rows] = self._structural[int(year)][cells[rows]]
            daily[rows] = self._traffic[int(year)][cells[rows]]

        shares = self._profiles[
            self._region_index[cells], day_kind_index(stamps)[:, None], np.arange(5)[None, :], np.asarray(stamps.hour)[:, None]
        ]
        transport_use = daily * shares

        return np.hstack(
            [
                structural,
                transport_use,
                self.meteorology.values(cells, stamps),
                self.remote_sensing.lookup(cells, stamps),
                self.emissions.lookup(cells, stamps),
                self._land_use[cells],
                temporal_matrix(stamps),
            ]
        )

    def _check_gaps(self, cells: np.ndarray, stamps: pd.DatetimeIndex) -> None:
        offenders = []
        missing_years = sorted(set(np.unique(stamps.year).tolist()) - set(self._road_years))
        offenders += [f"roads:{year}" for year in missing_years]
        no_land = np.unique(cells[~self._has_land_use[cells]])
        offenders += [f"land_use:cell {c}" for c in no_land.tolist()]
        no_region = np.unique(cells[self._region_index[cells] < 0])
        offenders += [f"region:cell {c}" for c in no_region.tolist()]
        if offenders:
            raise DataGapError("Feature families have gaps", offenders=offenders)


def assemble_feature_matrix(store: FeatureStore, keys: Sequence[Tuple[int, pd.Timestamp]]) -> FeatureMatrix:
    """
    Build the 152-column feature matrix for requested (cell, timestamp) keys.

    Row order follows the request order.

    Args:
        store: Feature store covering every family
        keys: (cell_id, timestamp) pairs

    Returns:
        FeatureMatrix
    """
    cell_ids = np.array([int(c) for c, _ in keys], dtype=np.int64)
    timestamps = pd.DatetimeIndex([t for _, t in keys])
    values = store.rows(cell_ids, timestamps) if len(keys) else np.empty((0, len(FEATURE_NAMES)))
    return FeatureMatrix(values=values, cell_ids=cell_ids, timestamps=timestamps)


def load_feature_store(input_dir: Path) -> FeatureStore:
    """
    Load every family from an input directory laid out as INPUT_FILES.

    Args:
        input_dir: Directory holding the input CSVs and roads_<year>.csv snapshots

    Returns:
        FeatureStore
    """
    input_dir = Path(input_dir)
    area = load_study_area(input_dir / INPUT_FILES["study_area"])

    road_features = {}
    for path in sorted(input_dir.glob(ROADS_PATTERN)):
        try:
            year = int(path.stem.split("_", 1)[1])
        except ValueError:
            raise ValidationError(f"Road snapshot {path.name} is not named roads_<year>.csv") from None
        road_features[year] = road_structural_features(area, read_roads(path))
        logger.info(f"Road snapshot {year}: {len(road_features[year])} cells")
    if not road_features:
        raise ValidationError(f"No road snapshots ({ROADS_PATTERN}) in {input_dir}")

    regions = read_regions(input_dir / INPUT_FILES["regions"])
    traffic_means = read_traffic_means(input_dir / INPUT_FILES["traffic_means"])
    travel_profiles = read_travel_profiles(input_dir / INPUT_FILES["travel_profiles"])
    for region_id in sorted(set(regions)):
        travel_profiles.profile(region_id)
        traffic_means.table(region_id)

    meteorology = MeteorologyField(read_met_samples(input_dir / INPUT_FILES["met_samples"]), area)
    remote_sensing = monthly_composite(read_remote_sensing(input_dir / INPUT_FILES["remote_sensing"]), area)
    emissions = read_emissions(
        input_dir / INPUT_FILES["emissions"],
        input_dir / INPUT_FILES["emissions_hour_factors"],
        input_dir / INPUT_FILES["emissions_month_factors"],
        area,
    )
    land_use = read_land_use(input_dir / INPUT_FILES["land_use"], area.cell_size)

    return FeatureStore(
        area=area,
        road_features=road_features,
        regions=regions,
        traffic_means=traffic_means,
        travel_profiles=travel_profiles,
        meteorology=meteorology,
        remote_sensing=remote_sensing,
        emissions=emissions,
        land_use=land_use,
    )
