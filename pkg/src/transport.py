"""Transport infrastructure and transport use feature families."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd
import shapely
from shapely import wkt
from shapely.errors import ShapelyError
from shapely.geometry import LineString

from .errors import ProfileNotNormalizedError, UnknownRegionError, ValidationError
from .grid import StudyArea
from .ingest import read_csv_checked
from .schema import (
    DAY_KINDS,
    DISTANCE_SENTINEL_M,
    HIGHWAY_TYPES,
    MOTOR_HIGHWAY_TYPES,
    TRAFFIC_MODES,
)

logger = logging.getLogger(__name__)

PROFILE_HOUR_COLUMNS = [f"h{h:02d}" for h in range(24)]
PROFILE_TOLERANCE = 1e-9
CLIP_TOLERANCE_M = 1e-9


@dataclass(frozen=True)
class RoadSegment:
    """A road centreline in planar meters."""

    segment_id: str
    highway_type: str
    line: LineString

    def __post_init__(self):
        if self.highway_type not in HIGHWAY_TYPES:
            raise ValidationError(f"Segment {self.segment_id}: unknown highway type {self.highway_type!r}")
        if len(self.line.coords) < 2 or not self.line.length > 0:
            raise ValidationError(f"Segment {self.segment_id}: polyline needs two points and positive length")


def read_roads(path: Path) -> List[RoadSegment]:
    """Load a road snapshot (segment_id, highway_type, wkt_linestring)."""
    frame = read_csv_checked(path, ["segment_id", "highway_type", "wkt_linestring"], dtype=str)
    segments = []
    for rec in frame.itertuples(index=False):
        try:
            line = wkt.loads(rec.wkt_linestring)
        except ShapelyError as e:
            raise ValidationError(f"Segment {rec.segment_id}: invalid WKT ({e})") from e
        if not isinstance(line, LineString):
            raise ValidationError(f"Segment {rec.segment_id}: expected LINESTRING, got {line.geom_type}")
        segments.append(RoadSegment(rec.segment_id, rec.highway_type, line))
    logger.debug(f"Loaded {len(segments)} road segments from {Path(path).name}")
    return segments


def _cell_bounds(area: StudyArea, cell_ids: np.ndarray) -> np.ndarray:
    half = area.cell_size / 2.0
    cx = area.centroids[cell_ids, 0]
    cy = area.centroids[cell_ids, 1]
    return np.column_stack([cx - half, cy - half, cx + half, cy + half])


def _edge_lines(x0: np.ndarray, y0: np.ndarray, x1: np.ndarray, y1: np.ndarray) -> np.ndarray:
    return shapely.linestrings(np.stack([np.column_stack([x0, y0]), np.column_stack([x1, y1])], axis=1))


def clipped_lengths(segment: RoadSegment, area: StudyArea) -> Dict[int, float]:
    """
    Length of a segment inside each masked cell it crosses.

    Cells are half-open: a stretch lying on an edge shared by two masked
    cells belongs to the cell above or to the right of that edge. Edges on
    the mask boundary stay closed, so the lengths of a segment inside the
    area sum to its full length.

    Args:
        segment: Road segment
        area: Study area

    Returns:
        Mapping cell_id -> clipped length in meters (only nonzero entries)
    """
    minx, miny, maxx, maxy = segment.line.bounds
    s = area.cell_size
    # ceil - 1 also picks the cell whose upper or right edge carries the line
    col_lo = int(np.ceil((minx - area.origin_x) / s)) - 1
    col_hi = int(np.floor((maxx - area.origin_x) / s))
    row_lo = int(np.ceil((miny - area.origin_y) / s)) - 1
    row_hi = int(np.floor((maxy - area.origin_y) / s))

    candidates = [
        (r, c)
        for r in range(row_lo, row_hi + 1)
        for c in range(col_lo, col_hi + 1)
        if area.has_cell(r, c)
    ]
    if not candidates:
        return {}
    ids = np.array([area.cell_id_at(r, c) for r, c in candidates], dtype=np.int64)
    bounds = _cell_bounds(area, ids)
    x0, y0, x1, y1 = bounds.T
    lengths = shapely.length(shapely.intersection(segment.line, shapely.box(x0, y0, x1, y1)))

    # shared right and top edges belong to the neighbour
    right_shared = np.array([area.has_cell(r, c + 1) for r, c in candidates])
    top_shared = np.array([area.has_cell(r + 1, c) for r, c in candidates])
    on_right = shapely.length(shapely.intersection(segment.line, _edge_lines(x1, y0, x1, y1)))
    on_top = shapely.length(shapely.intersection(segment.line, _edge_lines(x0, y1, x1, y1)))
    lengths = lengths - np.where(right_shared, on_right, 0.0) - np.where(top_shared, on_top, 0.0)
    return {int(i): float(v) for i, v in zip(ids, lengths) if v > CLIP_TOLERANCE_M}


def road_structural_features(area: StudyArea, segments: Sequence[RoadSegment]) -> pd.DataFrame:
    """
    Distance-to-nearest and total-length features for the 14 highway types.

    Args:
        area: Study area
        segments: Road segments in the area's CRS

    Returns:
        Frame indexed by cell_id with distance_<type> columns (14) followed by
        length_<type> columns (14). Absent types get the distance sentinel.
    """
    n = len(area)
    distances = np.full((n, len(HIGHWAY_TYPES)), DISTANCE_SENTINEL_M, dtype=np.float64)
    lengths = np.zeros((n, len(HIGHWAY_TYPES)), dtype=np.float64)
    points = shapely.points(area.centroids)

    by_type: Dict[str, List[LineString]] = {t: [] for t in HIGHWAY_TYPES}
    for segment in segments:
        by_type[segment.highway_type].append(segment.line)
        t = HIGHWAY_TYPES.index(segment.highway_type)
        for cell_id, length in clipped_lengths(segment, area).items():
            lengths[cell_id, t] += length

    for t, highway_type in enumerate(HIGHWAY_TYPES):
        lines = by_type[highway_type]
        if not lines:
            continue
        network = shapely.multilinestrings(lines)
        distances[:, t] = shapely.distance(points, network)

    columns = [f"distance_{t}" for t in HIGHWAY_TYPES] + [f"length_{t}" for t in HIGHWAY_TYPES]
    return pd.DataFrame(
        np.hstack([distances, lengths]),
        index=pd.Index(area.cell_ids, name="cell_id"),
        columns=columns,
    )


class TrafficMeans:
    """Mean flow per meter of road per day, by region, road type and mode."""

    def __init__(self, frame: pd.DataFrame):
        """
        Initialize from a long frame.

        Args:
            frame: Columns region_id, highway_type, mode, mean_flow_per_meter
        """
        bad_types = sorted(set(frame["highway_type"]) - set(MOTOR_HIGHWAY_TYPES))
        if bad_types:
            raise ValidationError(f"Traffic means given for non-motor road types: {bad_types}")
        bad_modes = sorted(set(frame["mode"]) - set(TRAFFIC_MODES))
        if bad_modes:
            raise ValidationError(f"Unknown traffic modes: {bad_modes}")
        if (frame["mean_flow_per_meter"] < 0).any():
            raise ValidationError("Traffic means must be nonnegative")

        self._tables: Dict[str, np.ndarray] = {}
        for region_id, group in frame.groupby("region_id", sort=True):
            table = np.zeros((len(MOTOR_HIGHWAY_TYPES), len(TRAFFIC_MODES)), dtype=np.float64)
            for rec in group.itertuples(index=False):
                table[MOTOR_HIGHWAY_TYPES.index(rec.highway_type), TRAFFIC_MODES.index(rec.mode)] = float(
                    rec.mean_flow_per_meter
                )
            self._tables[str(region_id)] = table

    @property
    def regions(self) -> List[str]:
        return sorted(self._tables)

    def table(self, region_id: str) -> np.ndarray:
        """(10 motor types x 5 modes) flow table for one region."""
        try:
            return self._tables[str(region_id)]
        except KeyError:
            raise UnknownRegionError(f"No traffic means for region {region_id!r}") from None


def read_traffic_means(path: Path) -> TrafficMeans:
    """Load the traffic means file."""
    frame = read_csv_checked(
        path,
        ["region_id", "highway_type", "mode", "mean_flow_per_meter"],
        dtype={"region_id": str, "highway_type": str, "mode": str},
    )
    return TrafficMeans(frame)


def traffic_grid_score(lengths: Mapping[str, float], means: TrafficMeans, region_id: str) -> Dict[str, float]:
    """
    Daily traffic score for one cell.

    score[mode] = sum over motor road types of length_m * mean_flow_per_meter.

    Args:
        lengths: Road length per highway type inside the cell, meters
        means: Regional traffic means
        region_id: Region the cell belongs to

    Returns:
        Mapping mode -> daily score
    """
    table = means.table(region_id)
    vector = np.array([float(lengths.get(t, 0.0)) for t in MOTOR_HIGHWAY_TYPES])
    return {mode: float(vector @ table[:, m]) for m, mode in enumerate(TRAFFIC_MODES)}


def traffic_scores(structural: pd.DataFrame, regions: pd.Series, means: TrafficMeans) -> pd.DataFrame:
    """
    Daily traffic scores for every cell of a structural feature frame.

    Args:
        structural: Output of road_structural_features
        regions: region_id per cell_id
        means: Regional traffic means

    Returns:
        Frame indexed by cell_id with one column per mode
    """
    missing = structural.index.difference(regions.index)
    if len(missing):
        raise UnknownRegionError("Cells without a region", offenders=missing.tolist())
    lengths = structural[[f"length_{t}" for t in MOTOR_HIGHWAY_TYPES]].to_numpy()
    cell_regions = regions.reindex(structural.index).to_numpy()
    scores = np.zeros((len(structural), len(TRAFFIC_MODES)), dtype=np.float64)
    for region_id in np.unique(cell_regions):
        rows = cell_regions == region_id
        scores[rows] = lengths[rows] @ means.table(region_id)
    return pd.DataFrame(scores, index=structural.index, columns=list(TRAFFIC_MODES))


def day_kind(timestamp: pd.Timestamp) -> str:
    """Weekday, Saturday or Sunday."""
    weekday = timestamp.weekday()
    if weekday < 5:
        return "Weekday"
    return "Saturday" if weekday == 5 else "Sunday"


def day_kind_index(timestamps: pd.DatetimeIndex) -> np.ndarray:
    """Vectorised day_kind as indices into DAY_KINDS."""
    weekday = np.asarray(timestamps.dayofweek)
    return np.where(weekday < 5, 0, np.where(weekday == 5, 1, 2))


class TravelProfiles:
    """Normalised hourly travel shares by region, day kind and mode."""

    def __init__(self, frame: pd.DataFrame):
        """
        Initialize from a wide frame.

        Args:
            frame: Columns region_id, day_kind, mode, h00 ... h23

        Raises:
            ProfileNotNormalizedError: If a 24-vector is negative or does not sum to 1
        """
        bad_kinds = sorted(set(frame["day_kind"]) - set(DAY_KINDS))
        if bad_kinds:
            raise ValidationError(f"Unknown day kinds: {bad_kinds}")
        bad_modes = sorted(set(frame["mode"]) - set(TRAFFIC_MODES))
        if bad_modes:
            raise ValidationError(f"Unknown traffic modes: {bad_modes}")

        self._profiles: Dict[str, np.ndarray] = {}
        for region_id, group in frame.groupby("region_id", sort=True):
            profile = np.full((len(DAY_KINDS), len(TRAFFIC_MODES), 24), np.nan)
            for rec in group.itertuples(index=False):
                vector = np.array([getattr(rec, c) for c in PROFILE_HOUR_COLUMNS], dtype=np.float64)
                if (vector < 0).any() or abs(vector.sum() - 1.0) > PROFILE_TOLERANCE:
                    raise ProfileNotNormalizedError(
                        f"Profile {region_id}/{rec.day_kind}/{rec.mode} sums to {vector.sum():.12f}"
                    )
                profile[DAY_KINDS.index(rec.day_kind), TRAFFIC_MODES.index(rec.mode)] = vector
            if np.isnan(profile).any():
                raise ValidationError(f"Travel profiles for region {region_id!r} are incomplete")
            self._profiles[str(region_id)] = profile

    @property
    def regions(self) -> List[str]:
        return sorted(self._profiles)

    def profile(self, region_id: str) -> np.ndarray:
        """(3 day kinds x 5 modes x 24 hours) array for one region."""
        try:
            return self._profiles[str(region_id)]
        except KeyError:
            raise UnknownRegionError(f"No travel profile for region {region_id!r}") from None

    def vector(self, region_id: str, kind: str, mode: str) -> np.ndarray:
        return self.profile(region_id)[DAY_KINDS.index(kind), TRAFFIC_MODES.index(mode)]


def read_travel_profiles(path: Path) -> TravelProfiles:
    """Load the travel profiles file."""
    frame = read_csv_checked(
        path,
        ["region_id", "day_kind", "mode"] + PROFILE_HOUR_COLUMNS,
        dtype={"region_id": str, "day_kind": str, "mode": str},
    )
    return TravelProfiles(frame)


def temporal_distribute(daily_score: float, profile_24: Sequence[float], timestamp: pd.Timestamp) -> float:
    """
    Hourly share of a daily score.

    Args:
        daily_score: Daily traffic score
        profile_24: Normalised profile for the timestamp's day kind
        timestamp: Hour of interest

    Returns:
        daily_score * profile_24[hour]
    """
    return float(daily_score) * float(profile_24[timestamp.hour])
