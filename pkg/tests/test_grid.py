"""Tests for grid module."""

import math

import numpy as np
import pandas as pd
import pytest

from src.errors import OutOfAreaError, ValidationError
from src.grid import (
    abstraction_summary,
    build_study_area,
    cell_lookup,
    load_study_area,
    snap_stations,
    snap_to_centroid,
    write_study_area,
)


def full_area(rows=20, cols=20, size=1000.0):
    return build_study_area((0.0, 0.0), size, [(r, c) for r in range(rows) for c in range(cols)])


def test_single_cell_centroid():
    """Test a one-cell area has its centroid at the cell centre."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0)])
    assert len(area) == 1
    assert (area.cells[0].centroid_x, area.cells[0].centroid_y) == (500.0, 500.0)


def test_full_mask_cell_count():
    """Test a 20x20 mask yields 400 distinct cells."""
    area = full_area()
    assert len(area) == 400
    assert len(set(area.cell_ids.tolist())) == 400


def test_centroid_formula_with_offset_origin():
    """Test centroids equal origin + (col + 0.5, row + 0.5) * size."""
    area = build_study_area((100.0, -50.0), 250.0, [(2, 3), (0, 1)])
    for cell in area.cells:
        assert cell.centroid_x == 100.0 + (cell.col + 0.5) * 250.0
        assert cell.centroid_y == -50.0 + (cell.row + 0.5) * 250.0


def test_construction_is_deterministic():
    """Test the same mask in any order gives the same ids."""
    mask = [(1, 1), (0, 0), (0, 1)]
    a = build_study_area((0.0, 0.0), 1000.0, mask)
    b = build_study_area((0.0, 0.0), 1000.0, list(reversed(mask)))
    assert [(c.row, c.col) for c in a.cells] == [(c.row, c.col) for c in b.cells]


def test_build_rejects_bad_inputs():
    """Test empty masks and non-positive sizes are rejected."""
    with pytest.raises(ValidationError):
        build_study_area((0.0, 0.0), 1000.0, [])
    with pytest.raises(ValidationError):
        build_study_area((0.0, 0.0), 0.0, [(0, 0)])


def test_cell_lookup_half_open_convention():
    """Test boundary points map to the cell whose lower edge they sit on."""
    area = full_area(2, 2)
    assert cell_lookup(area, 500.0, 500.0) == area.cell_id_at(0, 0)
    assert cell_lookup(area, 999.999, 0.001) == area.cell_id_at(0, 0)
    assert cell_lookup(area, 1000.0, 1000.0) == area.cell_id_at(1, 1)


def test_cell_lookup_outside_mask():
    """Test points outside the mask raise OutOfAreaError."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0)])
    with pytest.raises(OutOfAreaError):
        cell_lookup(area, 1500.0, 500.0)
    with pytest.raises(OutOfAreaError):
        cell_lookup(area, -1e-6, 500.0)


def test_snap_at_centroid_and_corner():
    """Test snapping distances at a centroid and at a cell corner."""
    area = full_area(2, 2)
    cell_id, distance = snap_to_centroid((500.0, 500.0), area)
    assert cell_id == area.cell_id_at(0, 0)
    assert distance == 0.0
    _, corner = snap_to_centroid((1000.0, 1000.0), area)
    assert corner == pytest.approx(math.sqrt(500.0**2 + 500.0**2))


def test_snap_property_over_random_points():
    """Test snapped cell agrees with lookup and distance stays within half the diagonal."""
    area = full_area(5, 5)
    rng = np.random.default_rng(3)
    bound = math.sqrt(2) / 2 * 1000.0
    for x, y in rng.uniform(0.0, 5000.0, size=(500, 2)):
        cell_id, distance = snap_to_centroid((x, y), area)
        assert cell_id == cell_lookup(area, x, y)
        cell = area.cells[cell_id]
        assert distance == pytest.approx(math.hypot(x - cell.centroid_x, y - cell.centroid_y))
        assert distance <= bound + 1e-9


def test_snap_stations_and_summary():
    """Test station snapping and the abstraction summary."""
    area = full_area(2, 2)
    stations = pd.DataFrame(
        {
            "station_id": ["B", "A"],
            "name": ["Bee", "Ay"],
            "environment_class": ["UrbanTraffic", "RuralBackground"],
            "x": [500.0, 1300.0],
            "y": [500.0, 1400.0],
        }
    )
    sites = snap_stations(stations, area)
    assert [s.station_id for s in sites] == ["A", "B"]
    assert sites[0].snapped_cell == area.cell_id_at(1, 1)
    assert sites[0].abstraction_distance_m == pytest.approx(math.hypot(200.0, 100.0))
    summary = abstraction_summary(sites)
    assert summary["count"] == 2
    assert summary["farthest_station"] == "A"
    assert summary["max_m"] == pytest.approx(math.hypot(200.0, 100.0))


def test_snap_stations_rejects_unknown_class():
    """Test an unknown environment class is a validation error."""
    area = full_area(1, 1)
    stations = pd.DataFrame(
        {"station_id": ["A"], "name": ["A"], "environment_class": ["Kerbside"], "x": [1.0], "y": [1.0]}
    )
    with pytest.raises(ValidationError):
        snap_stations(stations, area)


def test_study_area_file_round_trip(tmp_path):
    """Test writing and reading the definition file keeps the mask and geometry."""
    area = build_study_area((10.0, 20.0), 500.0, [(0, 0), (0, 2), (3, 1)])
    path = tmp_path / "study_area.csv"
    write_study_area(area, path)
    loaded = load_study_area(path)
    assert loaded.mask == area.mask
    assert (loaded.origin_x, loaded.origin_y, loaded.cell_size) == (10.0, 20.0, 500.0)


def test_raster_layout_and_neighbours():
    """Test raster placement and 8-neighbourhood lookups."""
    area = full_area(3, 3)
    raster = area.to_raster(np.arange(9, dtype=float))
    assert raster[2, 0] == area.cell_id_at(2, 0)
    np.testing.assert_array_equal(area.from_raster(raster), np.arange(9))
    assert len(area.neighbours(area.cell_id_at(1, 1))) == 8
    assert len(area.neighbours(area.cell_id_at(0, 0))) == 3
