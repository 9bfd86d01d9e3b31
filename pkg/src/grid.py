"""Eulerian grid framework and station-to-centroid abstraction."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import OutOfAreaError, ValidationError
from .schema import ENVIRONMENT_CLASSES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridCell:
    """One square cell of the study area."""

    cell_id: int
    row: int
    col: int
    centroid_x: float
    centroid_y: float


@dataclass(frozen=True)
class StationSite:
    """A monitoring station snapped to its grid centroid."""

    station_id: str
    name: str
    environment_class: str
    true_x: float
    true_y: float
    snapped_cell: int
    abstraction_distance_m: float


class StudyArea:
    """
    Masked rectangular grid of square cells.

    Cells are half-open intervals [k*s, (k+1)*s) on both axes, measured from
    the origin. Cell ids are assigned in (row, col) order so construction is
    deterministic. Instances are immutable after construction.
    """

    def __init__(self, origin_x: float, origin_y: float, cell_size: float, mask: Iterable[Tuple[int, int]]):
        """
        Initialize the study area.

        Args:
            origin_x: Easting of the grid origin in meters
            origin_y: Northing of the grid origin in meters
            cell_size: Cell edge length in meters
            mask: (row, col) pairs included as land cells
        """
        if not cell_size > 0:
            raise ValidationError(f"cell_size must be positive, got {cell_size}")
        mask_set: FrozenSet[Tuple[int, int]] = frozenset((int(r), int(c)) for r, c in mask)
        if not mask_set:
            raise ValidationError("Study-area mask is empty")

        self.origin_x = float(origin_x)
        self.origin_y = float(origin_y)
        self.cell_size = float(cell_size)
        self.mask = mask_set

        ordered = sorted(mask_set)
        self._id_by_rc: Dict[Tuple[int, int], int] = {}
        cells: List[GridCell] = []
        for cell_id, (row, col) in enumerate(ordered):
            self._id_by_rc[(row, col)] = cell_id
            cells.append(
                GridCell(
                    cell_id=cell_id,
                    row=row,
                    col=col,
                    centroid_x=self.origin_x + (col + 0.5) * self.cell_size,
                    centroid_y=self.origin_y + (row + 0.5) * self.cell_size,
                )
            )
        self.cells: Tuple[GridCell, ...] = tuple(cells)

        self.rows = np.array([c.row for c in cells], dtype=np.int64)
        self.cols = np.array([c.col for c in cells], dtype=np.int64)
        self.centroids = np.column_stack(
            [[c.centroid_x for c in cells], [c.centroid_y for c in cells]]
        ).astype(np.float64)
        self.row_min, self.row_max = int(self.rows.min()), int(self.rows.max())
        self.col_min, self.col_max = int(self.cols.min()), int(self.cols.max())

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def cell_ids(self) -> np.ndarray:
        return np.arange(len(self.cells), dtype=np.int64)

    @property
    def shape(self) -> Tuple[int, int]:
        """Height and width of the mask's bounding box, in cells."""
        return (self.row_max - self.row_min + 1, self.col_max - self.col_min + 1)

    def cell(self, cell_id: int) -> GridCell:
        try:
            return self.cells[int(cell_id)]
        except IndexError:
            raise OutOfAreaError(f"Unknown cell id {cell_id}") from None

    def cell_id_at(self, row: int, col: int) -> int:
        try:
            return self._id_by_rc[(int(row), int(col))]
        except KeyError:
            raise OutOfAreaError(f"Cell ({row}, {col}) is outside the study-area mask") from None

    def has_cell(self, row: int, col: int) -> bool:
        return (int(row), int(col)) in self._id_by_rc

    def index_of(self, cell_ids: Sequence[int]) -> np.ndarray:
        """Validate cell ids and return them as an int64 index array."""
        ids = np.asarray(cell_ids, dtype=np.int64)
        bad = ids[(ids < 0) | (ids >= len(self.cells))]
        if bad.size:
            raise OutOfAreaError(f"Unknown cell ids: {sorted(set(bad.tolist()))[:10]}")
        return ids

    def neighbours(self, cell_id: int) -> List[int]:
        """Masked cells in the 8-neighbourhood of a cell."""
        cell = self.cell(cell_id)
        out = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rc = (cell.row + dr, cell.col + dc)
                if rc in self._id_by_rc:
                    out.append(self._id_by_rc[rc])
        return out

    def to_raster(self, values: Sequence[float], fill: float = np.nan) -> np.ndarray:
        """
        Lay per-cell values out on the bounding-box raster.

        Args:
            values: One value per cell, in cell-id order
            fill: Value for masked-out raster positions

        Returns:
            2-D array indexed [row - row_min, col - col_min]
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != len(self.cells):
            raise ValidationError(f"Expected {len(self.cells)} values, got {values.shape[0]}")
        raster = np.full(self.shape, fill, dtype=np.float64)
        raster[self.rows - self.row_min, self.cols - self.col_min] = values
        return raster

    def from_raster(self, raster: np.ndarray) -> np.ndarray:
        """Inverse of to_raster: read per-cell values back out of a raster."""
        return np.asarray(raster)[self.rows - self.row_min, self.cols - self.col_min]


def build_study_area(origin: Tuple[float, float], cell_size: float, mask: Iterable[Tuple[int, int]]) -> StudyArea:
    """
    Build a study area with one GridCell per masked (row, col).

    Args:
        origin: (x, y) of the grid origin in meters
        cell_size: Cell edge length in meters
        mask: Included (row, col) pairs

    Returns:
        The constructed StudyArea
    """
    area = StudyArea(origin[0], origin[1], cell_size, mask)
    logger.debug(f"Built study area with {len(area)} cells of {cell_size:g} m")
    return area


def cell_lookup(area: StudyArea, x: float, y: float) -> int:
    """
    Map planar coordinates to the id of the containing cell.

    Raises:
        OutOfAreaError: If the point falls in no masked cell
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise OutOfAreaError(f"Non-finite coordinate ({x}, {y})")
    col = math.floor((x - area.origin_x) / area.cell_size)
    row = math.floor((y - area.origin_y) / area.cell_size)
    if not area.has_cell(row, col):
        raise OutOfAreaError(f"Point ({x}, {y}) is outside the study-area mask")
    return area.cell_id_at(row, col)


def snap_to_centroid(point: Tuple[float, float], area: StudyArea) -> Tuple[int, float]:
    """
    Abstract a point location to the centroid of its containing cell.

    Args:
        point: (x, y) in meters
        area: Study area

    Returns:
        Tuple of (cell_id, planar distance to the centroid in meters)
    """
    x, y = float(point[0]), float(point[1])
    cell_id = cell_lookup(area, x, y)
    cell = area.cells[cell_id]
    return cell_id, math.hypot(x - cell.centroid_x, y - cell.centroid_y)


def snap_stations(stations: pd.DataFrame, area: StudyArea) -> List[StationSite]:
    """
    Snap every station in a stations table to its grid centroid.

    Args:
        stations: Frame with station_id, name, environment_class, x, y
        area: Study area

    Returns:
        StationSite list ordered by station_id
    """
    sites = []
    for rec in stations.sort_values("station_id").itertuples(index=False):
        if rec.environment_class not in ENVIRONMENT_CLASSES:
            raise ValidationError(
                f"Station {rec.station_id} has unknown environment class {rec.environment_class!r}"
            )
        cell_id, distance = snap_to_centroid((rec.x, rec.y), area)
        sites.append(
            StationSite(
                station_id=str(rec.station_id),
                name=str(rec.name),
                environment_class=str(rec.environment_class),
                true_x=float(rec.x),
                true_y=float(rec.y),
                snapped_cell=cell_id,
                abstraction_distance_m=distance,
            )
        )
    return sites


def abstraction_summary(sites: Sequence[StationSite]) -> Dict[str, object]:
    """
    Summarise how far stations moved when snapped to centroids.

    Returns:
        Dict with count, max/mean/median distance and the farthest station id
    """
    if not sites:
        return {"count": 0, "max_m": None, "mean_m": None, "median_m": None, "farthest_station": None}
    distances = np.array([s.abstraction_distance_m for s in sites])
    farthest = sites[int(np.argmax(distances))]
    return {
        "count": len(sites),
        "max_m": float(distances.max()),
        "mean_m": float(distances.mean()),
        "median_m": float(np.median(distances)),
        "farthest_station": farthest.station_id,
    }


def load_study_area(path: Path) -> StudyArea:
    """
    Read a study-area definition file.

    The first line is `origin_x,origin_y,cell_size`; every following
    non-blank line is a `row,col` mask entry.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    if not lines:
        raise ValidationError(f"Study-area file {path} is empty")
    try:
        origin_x, origin_y, cell_size = (float(v) for v in lines[0].split(","))
        mask = []
        for line in lines[1:]:
            row, col = line.split(",")
            mask.append((int(row), int(col)))
    except ValueError as e:
        raise ValidationError(f"Malformed study-area file {path}: {e}") from e
    return build_study_area((origin_x, origin_y), cell_size, mask)


def write_study_area(area: StudyArea, path: Path) -> None:
    """Write a study area in the definition-file format."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{area.origin_x!r},{area.origin_y!r},{area.cell_size!r}\n")
        for row, col in sorted(area.mask):
            f.write(f"{row},{col}\n")
