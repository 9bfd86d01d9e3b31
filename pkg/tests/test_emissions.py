"""Tests for emissions module."""

import numpy as np
import pandas as pd
import pytest

from src.emissions import (
    EmissionsMap,
    normalise_to_unit_mean,
    read_emissions,
    scale_emissions,
    week_hour,
)
from src.errors import DataGapError
from src.grid import build_study_area
from src.schema import EMISSION_SPECIES, SNAP_SECTORS


def flat_map(n_cells=1, annual=1.0):
    return EmissionsMap(
        annual=np.full((7, 11, n_cells), annual),
        hour_factor=np.ones((11, 168)),
        month_factor=np.ones((7, 11, 12)),
    )


def test_week_hour():
    """Test Monday midnight is 0 and Sunday 23:00 is 167."""
    stamps = pd.DatetimeIndex(["2018-01-15 00:00", "2018-01-21 23:00", "2018-01-19 08:00"])
    assert week_hour(stamps).tolist() == [0, 167, 104]


def test_scale_emissions_product():
    """Test 100 x 1.5 x 0.8 = 120."""
    emissions = flat_map(annual=100.0)
    stamp = pd.Timestamp("2018-01-19 08:00")
    emissions.hour_factor[6, 104] = 1.5
    emissions.month_factor[6, 6, 0] = 0.8
    scaled = scale_emissions(emissions, stamp)
    assert scaled[6, 6, 0] == pytest.approx(120.0)
    assert scaled[0, 0, 0] == pytest.approx(100.0)


def test_zero_annual_stays_zero():
    """Test zero annual emissions scale to zero."""
    emissions = flat_map(annual=0.0)
    emissions.hour_factor[:] = 3.0
    assert (scale_emissions(emissions, pd.Timestamp("2018-05-01 12:00")) == 0).all()


def test_lookup_matches_scale():
    """Test the vectorised lookup agrees with per-timestamp scaling."""
    rng = np.random.default_rng(2)
    emissions = EmissionsMap(
        annual=rng.uniform(0, 10, size=(7, 11, 3)),
        hour_factor=rng.uniform(0.5, 1.5, size=(11, 168)),
        month_factor=rng.uniform(0.5, 1.5, size=(7, 11, 12)),
    )
    stamps = pd.DatetimeIndex(["2018-02-03 04:00", "2018-11-30 23:00"])
    out = emissions.lookup(np.array([2, 0]), stamps)
    assert out.shape == (2, 77)
    np.testing.assert_allclose(out[0], scale_emissions(emissions, stamps[0])[:, :, 2].ravel())
    np.testing.assert_allclose(out[1], scale_emissions(emissions, stamps[1])[:, :, 0].ravel())


def test_weekly_profile_preserves_annual_mean():
    """Test a normalised hour profile averages to the annual value over whole weeks."""
    rng = np.random.default_rng(9)
    emissions = flat_map(annual=50.0)
    emissions.hour_factor[:] = normalise_to_unit_mean(rng.uniform(0.2, 2.0, size=(11, 168)))
    stamps = pd.date_range("2018-01-01", periods=52 * 168, freq="h")
    series = emissions.lookup(np.zeros(len(stamps), dtype=np.int64), stamps)
    assert series.mean(axis=0) == pytest.approx(np.full(77, 50.0), rel=1e-9)


def test_seasonal_profile_year_mean():
    """Test a smooth normalised month profile keeps the year mean within 0.5%."""
    emissions = flat_map(annual=1.0)
    months = np.arange(12)
    emissions.month_factor[:] = normalise_to_unit_mean(1 + 0.3 * np.cos(2 * np.pi * months / 12))
    stamps = pd.date_range("2018-01-01", "2018-12-31 23:00", freq="h")
    series = emissions.lookup(np.zeros(len(stamps), dtype=np.int64), stamps)
    assert abs(series.mean() - 1.0) < 0.005


def test_read_emissions(tmp_path):
    """Test reading annual maps and renormalising scaling tables."""
    area = build_study_area((0.0, 0.0), 1000.0, [(0, 0), (0, 1)])
    pd.DataFrame(
        {"species": ["NOx", "NOx", "PM25"], "snap_sector": [7, 7, 2], "cell_id": [1, 1, 0], "annual_value": [2.0, 3.0, 4.0]}
    ).to_csv(tmp_path / "annual.csv", index=False)
    pd.DataFrame(
        [(s, h, 2.0) for s in SNAP_SECTORS for h in range(168)], columns=["snap_sector", "week_hour", "factor"]
    ).to_csv(tmp_path / "hour.csv", index=False)
    month = pd.DataFrame(
        [(sp, s, m, float(m)) for sp in EMISSION_SPECIES for s in SNAP_SECTORS for m in range(1, 13)],
        columns=["species", "snap_sector", "month", "factor"],
    )
    month.to_csv(tmp_path / "month.csv", index=False)
    emissions = read_emissions(tmp_path / "annual.csv", tmp_path / "hour.csv", tmp_path / "month.csv", area)
    assert emissions.annual[EMISSION_SPECIES.index("NOx"), 6, 1] == 5.0
    assert emissions.annual[EMISSION_SPECIES.index("PM25"), 1, 0] == 4.0
    np.testing.assert_allclose(emissions.hour_factor, 1.0)
    np.testing.assert_allclose(emissions.month_factor.mean(axis=-1), 1.0)

    month.iloc[1:].to_csv(tmp_path / "month.csv", index=False)
    with pytest.raises(DataGapError):
        read_emissions(tmp_path / "annual.csv", tmp_path / "hour.csv", tmp_path / "month.csv", area)
