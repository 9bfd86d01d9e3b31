"""Tests for meteorology module."""

import numpy as np
import pandas as pd
import pytest

from src.errors import DataGapError, ValidationError
from src.grid import build_study_area
from src.meteorology import MeteorologyField, idw_interpolate, idw_weights
from src.schema import MET_VARIABLES


def test_exact_at_sample_location():
    """Test a target on a sample takes that sample's value."""
    xy = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    out = idw_interpolate(xy, np.array([3.0, 8.0, 1.0]), np.array([[10.0, 0.0]]))
    assert out[0] == 8.0


def test_equidistant_is_mean():
    """Test two equidistant samples average."""
    xy = np.array([[-1.0, 0.0], [1.0, 0.0]])
    out = idw_interpolate(xy, np.array([10.0, 20.0]), np.array([[0.0, 5.0]]))
    assert out[0] == pytest.approx(15.0)


def test_weights_sum_to_one_and_bounded():
    """Test weights are a convex combination and results lie within sample range."""
    rng = np.random.default_rng(3)
    xy = rng.uniform(0, 1000, size=(30, 2))
    values = rng.normal(size=30)
    targets = rng.uniform(0, 1000, size=(200, 2))
    idx, weights = idw_weights(xy, targets)
    assert idx.shape == (200, 8)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0)
    out = idw_interpolate(xy, values, targets)
    assert (out >= values.min() - 1e-12).all() and (out <= values.max() + 1e-12).all()


def test_inverse_square_weights():
    """Test weights follow 1/d^2 for two samples."""
    xy = np.array([[1.0, 0.0], [-2.0, 0.0]])
    _, weights = idw_weights(xy, np.array([[0.0, 0.0]]))
    # 1/1 : 1/4
    np.testing.assert_allclose(weights[0], [0.8, 0.2])


def test_few_samples_and_bad_power():
    """Test k is capped at the sample count and power must be positive."""
    idx, _ = idw_weights(np.array([[0.0, 0.0]]), np.array([[5.0, 5.0]]))
    assert idx.shape == (1, 1)
    with pytest.raises(ValidationError):
        idw_weights(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]), power=0)
    with pytest.raises(ValidationError):
        idw_weights(np.empty((0, 2)), np.array([[1.0, 1.0]]))


def met_samples(points, timestamps, value_fn):
    records = []
    for t in timestamps:
        for x, y in points:
            for variable in MET_VARIABLES:
                records.append((variable, x, y, t, value_fn(x, y, t, variable)))
    return pd.DataFrame(records, columns=["variable", "x", "y", "timestamp", "value"])


def test_field_values_and_missing_point():
    """Test field interpolation including a timestamp with one point missing."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0), (0, 1)])
    points = [(500.0, 500.0), (1500.0, 500.0)]
    stamps = pd.date_range("2018-01-01", periods=2, freq="h")
    samples = met_samples(points, stamps, lambda x, y, t, v: x / 100.0 + t.hour)
    # drop the second point at the second hour for one variable
    drop = (samples["variable"] == "temperature_2m") & (samples["x"] == 1500.0) & (samples["timestamp"] == stamps[1])
    samples = samples[~drop]
    field = MeteorologyField(samples, area)
    out = field.values(np.array([0, 1, 1]), pd.DatetimeIndex([stamps[0], stamps[0], stamps[1]]))
    t = MET_VARIABLES.index("temperature_2m")
    assert out[0, t] == 5.0
    assert out[1, t] == 15.0
    assert out[2, t] == 6.0
    assert out[2, MET_VARIABLES.index("surface_pressure")] == 16.0


def test_field_unknown_timestamp():
    """Test a timestamp without samples is a data gap."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0)])
    samples = met_samples([(500.0, 500.0)], pd.date_range("2018-01-01", periods=1, freq="h"), lambda *a: 1.0)
    field = MeteorologyField(samples, area)
    with pytest.raises(DataGapError):
        field.values(np.array([0]), pd.DatetimeIndex(["2018-01-02"]))
