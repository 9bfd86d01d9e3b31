"""Tests for synthetic_world module."""

import json

import numpy as np
import pandas as pd
import pytest

from src.errors import ValidationError
from src.feature_store import INPUT_FILES, load_feature_store
from src.grid import snap_stations
from src.ingest import read_measurements, read_stations
from src.schema import FEATURE_NAMES
from src.synthetic_world import (
    GENERATING_COEFFICIENTS,
    POLLUTANT_OFFSETS,
    SyntheticWorldSpec,
    generate_world,
    log_concentration,
    world_timeline,
)
from src.writer import MANIFEST_NAME

NOISELESS = SyntheticWorldSpec(rows=6, cols=6, years=(2018,), stations_per_class=1, hour_step=97, noise_sigma=0.0, seed=21)


def manifest_files(out_dir):
    return json.loads((out_dir / MANIFEST_NAME).read_text())["files"]


def test_world_timeline():
    """Test the timeline covers whole years at the requested step."""
    hours = world_timeline((2017, 2016))
    assert len(hours) == 8784 + 8760
    assert hours[0] == pd.Timestamp("2016-01-01")
    assert hours[-1] == pd.Timestamp("2017-12-31T23:00")
    assert len(world_timeline((2018,), 7)) == len(range(0, 8760, 7))


def test_generation_is_deterministic(tmp_path):
    """Test the same spec writes a bytewise-identical tree and another seed does not."""
    spec = SyntheticWorldSpec(rows=6, cols=6, years=(2018,), stations_per_class=1, hour_step=49, seed=4)
    generate_world(spec, tmp_path / "a")
    generate_world(spec, tmp_path / "b")
    first, second = manifest_files(tmp_path / "a"), manifest_files(tmp_path / "b")
    assert first == second
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()

    other = SyntheticWorldSpec(rows=6, cols=6, years=(2018,), stations_per_class=1, hour_step=49, seed=5)
    generate_world(other, tmp_path / "c")
    assert manifest_files(tmp_path / "c")["measurements.csv"] != first["measurements.csv"]


def test_manifest_lists_every_input(small_world):
    """Test every input family is written and hashed."""
    out_dir, payload = small_world
    files = manifest_files(out_dir)
    for key, name in INPUT_FILES.items():
        if "{" not in name:
            assert name in files, key
    for year in (2016, 2017, 2018):
        assert f"roads_{year}.csv" in files
    assert payload["stations"] == 6
    assert payload["adversarial_station"] == "S06"
    assert payload["measurements"] > 0
    assert payload["generating_function"]["coefficients"] == GENERATING_COEFFICIENTS


def test_measurements_follow_generating_function(tmp_path):
    """Test noiseless measurements equal the documented formula, inverted at the adversarial station."""
    payload = generate_world(NOISELESS, tmp_path)
    store = load_feature_store(tmp_path)
    sites = {s.station_id: s for s in snap_stations(read_stations(tmp_path / INPUT_FILES["stations"]), store.area)}
    measurements = read_measurements(tmp_path / INPUT_FILES["measurements"])
    timeline = world_timeline(NOISELESS.years, NOISELESS.hour_step)
    offset = POLLUTANT_OFFSETS["NO2"]

    for station_id, group in measurements.groupby("station_id"):
        cell = sites[station_id].snapped_cell
        full = store.rows(np.full(len(timeline), cell, dtype=np.int64), timeline)
        z_full = pd.Series(log_concentration(full, FEATURE_NAMES, GENERATING_COEFFICIENTS, 1000.0), index=timeline)
        z = z_full.loc[pd.DatetimeIndex(group["timestamp"])].to_numpy()
        if station_id == payload["adversarial_station"]:
            z = 2.0 * z_full.mean() - z
        np.testing.assert_allclose(group["value"].to_numpy(), np.exp(z + offset), rtol=1e-12)


def test_adversarial_station_is_anticorrelated(tmp_path):
    """Test the planted station moves against the formula over time."""
    payload = generate_world(NOISELESS, tmp_path)
    store = load_feature_store(tmp_path)
    sites = {s.station_id: s for s in snap_stations(read_stations(tmp_path / INPUT_FILES["stations"]), store.area)}
    measurements = read_measurements(tmp_path / INPUT_FILES["measurements"])
    station = payload["adversarial_station"]
    group = measurements[measurements["station_id"] == station]
    stamps = pd.DatetimeIndex(group["timestamp"])
    rows = store.rows(np.full(len(stamps), sites[station].snapped_cell, dtype=np.int64), stamps)
    z = log_concentration(rows, FEATURE_NAMES, GENERATING_COEFFICIENTS, 1000.0)
    assert np.corrcoef(z, np.log(group["value"].to_numpy()))[0, 1] == pytest.approx(-1.0)
    assert sites[station].environment_class == "RuralBackground"


def test_world_without_stations(tmp_path):
    """Test zero stations give an empty measurements file with its header."""
    spec = SyntheticWorldSpec(rows=6, cols=6, years=(2018,), stations_per_class=0, hour_step=97)
    payload = generate_world(spec, tmp_path)
    assert payload["stations"] == 0
    assert payload["measurements"] == 0
    assert payload["adversarial_station"] is None
    header = (tmp_path / INPUT_FILES["measurements"]).read_text().strip()
    assert header == "station_id,pollutant,timestamp_iso8601,value"


def test_negative_artefacts_are_counted(tmp_path):
    """Test planted negative values appear in the file and in the payload."""
    spec = SyntheticWorldSpec(rows=6, cols=6, years=(2018,), stations_per_class=1, hour_step=49, negative_rate=0.1)
    payload = generate_world(spec, tmp_path)
    measurements = read_measurements(tmp_path / INPUT_FILES["measurements"])
    assert payload["negative_artefacts"] == int((measurements["value"] < 0).sum()) > 0


def test_spec_validation():
    """Test impossible world parameters are rejected."""
    bad = [
        {"rows": 5},
        {"years": ()},
        {"hour_step": 0},
        {"noise_sigma": -1.0},
        {"negative_rate": 1.0},
        {"n_regions": 0},
        {"pollutants": ("CO2",)},
        {"cell_size": 1234.0},
        {"coefficients": {"intercept": 1.0}},
    ]
    for overrides in bad:
        with pytest.raises(ValidationError):
            SyntheticWorldSpec(**overrides)
