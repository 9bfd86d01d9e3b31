"""Tests for metrics module."""

import numpy as np
import pandas as pd
import pytest

from src.errors import UndefinedMetricError, ValidationError
from src.grid import build_study_area
from src.metrics import (
    ExceedanceMap,
    daily_means,
    exceedance_count,
    exceedance_ladder,
    exceedance_map,
    exceedance_share,
    grayscale_levels,
    mean_peak_distance,
    peak_context,
    peak_distance,
    r_squared,
    running_mean_24h,
    summarise_scores,
)


def hourly(values, start="2018-01-01"):
    return pd.Series(np.asarray(values, dtype=float), index=pd.date_range(start, periods=len(values), freq="h"))


def test_r_squared_examples():
    """Test perfect, mean and anti-correlated predictions."""
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([2, 2, 2], [1, 2, 3]) == 0.0
    assert r_squared([3, 2, 1], [1, 2, 3]) == pytest.approx(-3.0)


def test_r_squared_undefined():
    """Test constant actuals and short input."""
    with pytest.raises(UndefinedMetricError):
        r_squared([1, 2], [5, 5])
    with pytest.raises(UndefinedMetricError):
        r_squared([1], [1])


def test_r_squared_degrades_with_noise():
    """Test more misfit noise gives a lower score."""
    rng = np.random.default_rng(0)
    actual = rng.normal(size=500)
    noise = rng.normal(size=500)
    scores = [r_squared(actual + s * noise, actual) for s in (0.1, 0.3, 0.6, 1.0)]
    assert scores == sorted(scores, reverse=True)


def test_peak_distance_examples():
    """Test exact, half and the 80.2 / 46.12 fixture."""
    measured = hourly([10, 100, 30])
    assert peak_distance(measured, hourly([0, 100, 0])).peak_distance_pct == 0.0
    report = peak_distance(measured, hourly([1, 50, 1]), "S1", "NO2")
    assert report.peak_distance_pct == 50.0
    assert report.peak_timestamp == pd.Timestamp("2018-01-01 01:00")
    assert report.station_id == "S1"
    fixture = peak_distance(hourly([80.2]), hourly([46.1150]))
    assert fixture.peak_distance_pct == pytest.approx(42.5, abs=1e-9)


def test_peak_distance_sign_and_ties():
    """Test over-prediction is negative and ties go to the earliest hour."""
    over = peak_distance(hourly([100.0]), hourly([130.0]))
    under = peak_distance(hourly([100.0]), hourly([70.0]))
    assert over.peak_distance_pct == -under.peak_distance_pct
    tied = peak_distance(hourly([5, 9, 9]), hourly([0, 1, 2]))
    assert tied.model_prediction_at_peak == 1.0


def test_peak_distance_errors():
    """Test missing predictions and all-NaN measurements."""
    with pytest.raises(ValidationError):
        peak_distance(hourly([1, 5]), hourly([1]))
    with pytest.raises(UndefinedMetricError):
        peak_distance(hourly([np.nan]), hourly([1]))


def test_mean_peak_distance():
    """Test signed averaging over stations."""
    reports = [peak_distance(hourly([100.0]), hourly([p])) for p in (80, 120, 50, 95, 60)]
    assert mean_peak_distance(reports) == pytest.approx((20 - 20 + 50 + 5 + 40) / 5)
    with pytest.raises(ValidationError):
        mean_peak_distance([])


def test_exceedance_count_examples():
    """Test strict counting at 25 and 200."""
    values = [9, 11, 26, 41, 300]
    assert exceedance_count(values, 25) == 3
    assert exceedance_count(values, 200) == 1
    assert exceedance_count(values, 11) == 3
    counts = [exceedance_count(values, t) for t in (0, 10, 25, 40, 200, 400)]
    assert counts == sorted(counts, reverse=True)


def test_full_year_exceedance():
    """Test an all-11 2018 series exceeds 10 in all 8760 hours."""
    year = pd.date_range("2018-01-01", "2018-12-31 23:00", freq="h")
    frame = pd.DataFrame({"cell_id": 0, "timestamp": year, "value": 11.0})
    emap = exceedance_map(frame, 10.0)
    assert emap.counts.loc[0] == 8760
    assert emap.hours_in_period == 8760


def test_running_mean_step():
    """Test 24 ones then 24 zeros."""
    means = running_mean_24h(hourly([1.0] * 24 + [0.0] * 24))
    assert means.isna().sum() == 23
    assert means.iloc[23] == 1.0
    assert means.iloc[35] == 0.5
    assert means.iloc[47] == 0.0


def test_running_mean_properties():
    """Test bounds, constant shift and gap handling."""
    rng = np.random.default_rng(1)
    series = hourly(rng.uniform(0, 50, size=100))
    means = running_mean_24h(series)
    shifted = running_mean_24h(series + 7.0)
    np.testing.assert_allclose(shifted.dropna(), means.dropna() + 7.0)
    values = series.to_numpy()
    for i in range(23, 100):
        window = values[i - 23 : i + 1]
        assert window.min() - 1e-9 <= means.iloc[i] <= window.max() + 1e-9
    gappy = series.drop(series.index[40])
    gap_means = running_mean_24h(gappy)
    assert gap_means.loc[series.index[41]:series.index[63]].isna().all()
    assert not np.isnan(gap_means.loc[series.index[64]])
    with pytest.raises(ValidationError):
        running_mean_24h(series.iloc[::-1])


def test_exceedance_on_running_mean():
    """Test counting on the trailing mean drops the first 23 hours."""
    frame = pd.DataFrame(
        {"cell_id": 3, "timestamp": pd.date_range("2018-01-01", periods=48, freq="h"), "value": 30.0}
    )
    assert exceedance_map(frame, 25.0, running_mean=True).counts.loc[3] == 25
    ladder = exceedance_ladder(frame, (10.0, 40.0))
    assert ladder[10.0].counts.loc[3] == 48
    assert ladder[40.0].counts.loc[3] == 0
    with pytest.raises(ValidationError):
        exceedance_ladder(frame, ())


def test_exceedance_share_brute_force():
    """Test the share of cells with at least one exceedance."""
    rng = np.random.default_rng(2)
    stamps = pd.date_range("2018-01-01", periods=48, freq="h")
    peaks = rng.gamma(2.0, 15.0, size=1000)
    records = []
    for cell_id, peak in enumerate(peaks):
        records.append(pd.DataFrame({"cell_id": cell_id, "timestamp": stamps, "value": peak * np.linspace(0.2, 1.0, 48)}))
    frame = pd.concat(records, ignore_index=True)
    for threshold in (10.0, 25.0, 40.0, 200.0):
        share = exceedance_share(exceedance_map(frame, threshold))
        assert share == pytest.approx(float((peaks > threshold).sum()) / 1000)


def test_exceedance_map_bounds():
    """Test counts outside [0, hours] are rejected."""
    with pytest.raises(ValidationError):
        ExceedanceMap(threshold=1.0, counts=pd.Series([5]), hours_in_period=4)


def test_grayscale_levels():
    """Test scaling to 0..255 with north-up row order."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0), (0, 1), (1, 0)])
    levels = grayscale_levels(area, pd.Series({0: 4, 1: 1, 2: 2}))
    # northern row (row 1) first; (1, 1) is outside the mask
    assert levels.tolist() == [[128, 0], [255, 64]]
    assert grayscale_levels(area, pd.Series({0: 0, 1: 0, 2: 0})).max() == 0


def test_peak_context_and_daily_means():
    """Test peak, daily and annual means of the peak's year."""
    series = hourly([1.0] * 24 + [2.0] * 23 + [50.0])
    context = peak_context(series)
    assert context["peak_value"] == 50.0
    assert context["max_daily_mean"] == pytest.approx((2.0 * 23 + 50.0) / 24)
    assert context["annual_mean"] == pytest.approx(series.mean())
    assert daily_means(series).tolist() == [1.0, pytest.approx((2.0 * 23 + 50.0) / 24)]


def test_summarise_scores():
    """Test summary ignores undefined scores."""
    summary = summarise_scores([0.5, None, 0.9, float("nan"), 0.7])
    assert summary == {"max": 0.9, "min": 0.5, "mean": pytest.approx(0.7), "median": 0.7, "count": 3}
    assert summarise_scores([None])["count"] == 0
