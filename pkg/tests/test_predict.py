"""Tests for predict module."""

import os

import numpy as np
import pandas as pd
import pytest

from src.errors import DataGapError, SchemaMismatchError, ValidationError
from src.experiments import build_station_rows
from src.feature_store import INPUT_FILES, load_feature_store
from src.gbdt import TrainConfig, fit
from src.grid import snap_stations
from src.ingest import clean_measurements, read_measurements, read_stations
from src.predict import MEASURED, PREDICTED, fill_gaps, grid_predict, hourly_span, model_columns, predict_rows
from src.schema import columns_for_families


@pytest.fixture(scope="module")
def hourly_setup(hourly_world):
    """Store, sites, NO2 measurements and a small model of the hourly world."""
    out_dir = hourly_world[0]
    store = load_feature_store(out_dir)
    sites = snap_stations(read_stations(out_dir / INPUT_FILES["stations"]), store.area)
    measurements, _ = clean_measurements(read_measurements(out_dir / INPUT_FILES["measurements"]))
    rows = build_station_rows(store, sites, measurements, "NO2").restrict(columns_for_families(["Global"]))
    config = TrainConfig(num_leaves=8, max_trees=10, early_stopping_rounds=3, learning_rate=0.3)
    model = fit(rows.features, rows.targets, rows.features, rows.targets, config, rows.feature_names)
    return store, sites, measurements, model


def station_series(measurements, station_id):
    data = measurements[(measurements["station_id"] == station_id) & (measurements["pollutant"] == "NO2")]
    return pd.Series(data["value"].to_numpy(), index=pd.DatetimeIndex(data["timestamp"]))


def test_hourly_span_is_half_open():
    """Test the span excludes its end hour."""
    span = hourly_span(pd.Timestamp("2018-01-01"), pd.Timestamp("2018-01-02"))
    assert len(span) == 24
    assert span[-1] == pd.Timestamp("2018-01-01T23:00")
    with pytest.raises(ValidationError):
        hourly_span(pd.Timestamp("2018-01-02"), pd.Timestamp("2018-01-01"))


def test_model_columns(hourly_setup):
    """Test a subset model maps onto its positions in the full matrix."""
    model = hourly_setup[3]
    positions = model_columns(model)
    assert len(positions) == 20
    assert list(np.diff(positions) > 0) == [True] * 19


def test_fill_gaps_full_year(hourly_setup):
    """Test measured hours are kept bitwise and every other hour is predicted."""
    store, sites, measurements, model = hourly_setup
    site = sites[0]
    series = station_series(measurements, site.station_id)

    augmented = fill_gaps(series, model, store, site, pd.Timestamp("2018-01-01"), pd.Timestamp("2019-01-01"), "NO2")
    frame = augmented.frame

    assert len(frame) == 8760
    assert augmented.counts[MEASURED] == len(series)
    assert augmented.counts.get(PREDICTED, 0) == 8760 - len(series)

    measured = frame[frame["source"] == MEASURED].set_index("timestamp")["value"]
    assert np.array_equal(measured.to_numpy(), series.sort_index().to_numpy())

    predicted = frame[frame["source"] == PREDICTED]
    cells = np.full(len(predicted), site.snapped_cell, dtype=np.int64)
    expected = predict_rows(model, store, cells, pd.DatetimeIndex(predicted["timestamp"]))
    assert np.array_equal(predicted["value"].to_numpy(), expected)


def test_fill_gaps_counts_with_measured_prefix(hourly_setup):
    """Test counts when only the first part of the span was measured."""
    store, sites, _, model = hourly_setup
    span = hourly_span(pd.Timestamp("2018-01-01"), pd.Timestamp("2018-03-01"))
    series = pd.Series(np.linspace(1.0, 50.0, 400), index=span[:400])

    augmented = fill_gaps(series, model, store, sites[1], span[0], span[-1] + pd.Timedelta(hours=1))
    assert len(span) == 1416
    assert augmented.counts == {PREDICTED: 1016, MEASURED: 400}
    assert np.array_equal(augmented.frame["value"].to_numpy()[:400], series.to_numpy())


def test_fill_gaps_treats_nan_as_missing(hourly_setup):
    """Test NaN measurements are replaced with predictions."""
    store, sites, _, model = hourly_setup
    span = hourly_span(pd.Timestamp("2018-06-01"), pd.Timestamp("2018-06-02"))
    values = np.arange(24, dtype=np.float64)
    values[[3, 7]] = np.nan
    augmented = fill_gaps(pd.Series(values, index=span), model, store, sites[0], span[0], pd.Timestamp("2018-06-02"))
    assert augmented.counts == {MEASURED: 22, PREDICTED: 2}
    assert list(augmented.frame["source"].iloc[[3, 7]]) == [PREDICTED, PREDICTED]
    assert not augmented.frame["value"].isna().any()


def test_fill_gaps_without_measurements(hourly_setup):
    """Test an empty series is predicted throughout."""
    store, sites, _, model = hourly_setup
    empty = pd.Series([], index=pd.DatetimeIndex([]), dtype=np.float64)
    augmented = fill_gaps(empty, model, store, sites[0], pd.Timestamp("2018-02-01"), pd.Timestamp("2018-02-02"))
    assert augmented.counts == {PREDICTED: 24}


def test_fill_gaps_errors(hourly_setup):
    """Test duplicate timestamps and hours without features are rejected."""
    store, sites, _, model = hourly_setup
    stamp = pd.Timestamp("2018-05-01T10:00")
    doubled = pd.Series([1.0, 2.0], index=pd.DatetimeIndex([stamp, stamp]))
    with pytest.raises(ValidationError):
        fill_gaps(doubled, model, store, sites[0], pd.Timestamp("2018-05-01"), pd.Timestamp("2018-05-02"))

    empty = pd.Series([], index=pd.DatetimeIndex([]), dtype=np.float64)
    with pytest.raises(DataGapError):
        fill_gaps(empty, model, store, sites[0], pd.Timestamp("2019-01-01"), pd.Timestamp("2019-01-02"))


def test_grid_predict_matches_row_predictions(hourly_setup):
    """Test every grid value equals the prediction at that cell and hour."""
    store, _, _, model = hourly_setup
    stamps = hourly_span(pd.Timestamp("2018-07-01"), pd.Timestamp("2018-07-01T06:00"))
    prediction = grid_predict(model, store, store.area.cell_ids, stamps, batch_size=50, pollutant="NO2", progress=False)

    assert prediction.values.shape == (len(store.area), 6)
    cells = np.repeat(store.area.cell_ids, 6)
    times = pd.DatetimeIndex(np.tile(stamps.to_numpy(), len(store.area)))
    expected = predict_rows(model, store, cells, times).reshape(len(store.area), 6)
    assert np.array_equal(prediction.values, expected)

    cmap = prediction.map_at(stamps[2])
    assert np.array_equal(cmap.values.to_numpy(), expected[:, 2])
    assert len(prediction.maps()) == 6

    frame = prediction.to_frame()
    assert list(frame.columns) == ["cell_id", "timestamp", "value"]
    assert frame["cell_id"].iloc[0] == frame["cell_id"].iloc[5] == store.area.cell_ids[0]
    assert np.array_equal(frame["value"].to_numpy(), expected.ravel())


def test_grid_predict_identical_for_any_worker_count(hourly_setup):
    """Test sharded prediction is bitwise identical across worker counts and batch sizes."""
    store, _, _, model = hourly_setup
    stamps = hourly_span(pd.Timestamp("2018-10-01"), pd.Timestamp("2018-10-02"))
    serial = grid_predict(model, store, store.area.cell_ids, stamps, workers=1, batch_size=100, progress=False)
    parallel = grid_predict(model, store, store.area.cell_ids, stamps, workers=2, batch_size=30, progress=False)
    single_block = grid_predict(model, store, store.area.cell_ids, stamps, batch_size=10**6, progress=False)
    assert np.array_equal(serial.values, parallel.values)
    assert np.array_equal(serial.values, single_block.values)
    assert serial.rows_per_second > 0


def test_grid_predict_validation(hourly_setup):
    """Test empty requests, bad batch sizes and foreign models are rejected."""
    store, _, _, model = hourly_setup
    stamps = hourly_span(pd.Timestamp("2018-01-01"), pd.Timestamp("2018-01-01T02:00"))
    with pytest.raises(ValidationError):
        grid_predict(model, store, [], stamps, progress=False)
    with pytest.raises(ValidationError):
        grid_predict(model, store, store.area.cell_ids, stamps, batch_size=0, progress=False)

    x = np.arange(50, dtype=np.float64).reshape(-1, 1)
    foreign = fit(x, x[:, 0] + 1.0, x, x[:, 0] + 1.0, TrainConfig(max_trees=2), ["not_a_feature"])
    with pytest.raises(SchemaMismatchError):
        grid_predict(foreign, store, store.area.cell_ids, stamps, progress=False)


@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs at least 4 CPUs")
def test_grid_predict_scales_with_workers(small_store, small_rows):
    """Test four workers give identical values at least twice as fast on 10^5 rows."""
    rows = small_rows.restrict(columns_for_families(["Global"]))
    model = fit(rows.features, rows.targets, rows.features, rows.targets, TrainConfig(num_leaves=8, max_trees=20), rows.feature_names)
    stamps = small_store.meteorology.timestamps
    assert len(stamps) * len(small_store.area) >= 10**5

    grid_predict(model, small_store, small_store.area.cell_ids, stamps[:10], workers=4, progress=False)
    serial = grid_predict(model, small_store, small_store.area.cell_ids, stamps, workers=1, batch_size=8192, progress=False)
    parallel = grid_predict(model, small_store, small_store.area.cell_ids, stamps, workers=4, batch_size=8192, progress=False)
    assert np.array_equal(serial.values, parallel.values)
    assert parallel.rows_per_second >= 2.0 * serial.rows_per_second
