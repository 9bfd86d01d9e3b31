"""Shared fixtures: small generated worlds, built once per test session."""

import pytest

from src.synthetic_world import SyntheticWorldSpec, generate_world

SMALL_WORLD = SyntheticWorldSpec(
    rows=8,
    cols=8,
    years=(2016, 2017, 2018),
    stations_per_class=1,
    hour_step=7,
    noise_sigma=0.05,
    seed=3,
)

# One year at every hour, for gap filling over contiguous spans.
HOURLY_WORLD = SyntheticWorldSpec(
    rows=6,
    cols=6,
    years=(2018,),
    stations_per_class=1,
    hour_step=1,
    noise_sigma=0.05,
    seed=11,
)


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """Directory holding a generated 8x8 world and its manifest payload."""
    out_dir = tmp_path_factory.mktemp("world")
    payload = generate_world(SMALL_WORLD, out_dir)
    return out_dir, payload


@pytest.fixture(scope="session")
def small_store(small_world):
    from src.feature_store import load_feature_store

    return load_feature_store(small_world[0])


@pytest.fixture(scope="session")
def small_inputs(small_world, small_store):
    """Snapped stations and cleaned measurements of the small world."""
    from src.feature_store import INPUT_FILES
    from src.grid import snap_stations
    from src.ingest import clean_measurements, read_measurements, read_stations

    out_dir = small_world[0]
    sites = snap_stations(read_stations(out_dir / INPUT_FILES["stations"]), small_store.area)
    measurements, _ = clean_measurements(read_measurements(out_dir / INPUT_FILES["measurements"]))
    return sites, measurements


@pytest.fixture(scope="session")
def small_rows(small_store, small_inputs):
    from src.experiments import build_station_rows

    sites, measurements = small_inputs
    return build_station_rows(small_store, sites, measurements, "NO2")


@pytest.fixture(scope="session")
def hourly_world(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("hourly_world")
    payload = generate_world(HOURLY_WORLD, out_dir)
    return out_dir, payload
