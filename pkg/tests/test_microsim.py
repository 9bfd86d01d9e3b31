"""Tests for microsim module."""

import numpy as np
import pandas as pd
import pytest

from src.errors import InconsistentMarginalsError, UnfittableCategoryError, UnknownRegionError
from src.microsim import (
    SurveySeed,
    build_travel_profiles,
    fit_region,
    ipf_fit,
    read_marginals,
    travel_profile_from_weights,
)
from src.schema import DAY_KINDS, TRAFFIC_MODES


def make_seed(pairs, trips=None):
    """Seed with attributes a and b; trips maps respondent index -> (day_kind, hour, mode)."""
    attributes = pd.DataFrame(
        {"respondent_id": [f"r{i}" for i in range(len(pairs))], "a": [p[0] for p in pairs], "b": [p[1] for p in pairs]}
    )
    records = []
    for i in range(len(pairs)):
        for kind in DAY_KINDS:
            for hour in range(24):
                records.append((f"r{i}", kind, hour, "none"))
    diary = pd.DataFrame(records, columns=["respondent_id", "day_kind", "hour", "mode"])
    for i, (kind, hour, mode) in (trips or {}).items():
        mask = (diary["respondent_id"] == f"r{i}") & (diary["day_kind"] == kind) & (diary["hour"] == hour)
        diary.loc[mask, "mode"] = mode
    return SurveySeed.from_frames(attributes, diary)


def test_two_by_two_fixture():
    """Test uniform seed with row targets [3, 1] and column targets [2, 2]."""
    seed = make_seed([("x", "u"), ("x", "v"), ("y", "u"), ("y", "v")])
    fit = fit_region(seed, "R1", {"a": {"x": 3, "y": 1}, "b": {"u": 2, "v": 2}}, tol=1e-10)
    assert fit.converged
    np.testing.assert_allclose(fit.weights.reshape(2, 2), [[1.5, 1.5], [0.5, 0.5]], atol=1e-8)


def test_single_dimension_closed_form():
    """Test one dimension converges in one sweep to target over seed count."""
    seed = make_seed([("x", "u"), ("x", "u"), ("y", "u")])
    fit = fit_region(seed, "R1", {"a": {"x": 10, "y": 4}})
    assert fit.iterations == 1
    np.testing.assert_allclose(fit.weights, [5.0, 5.0, 4.0])


def test_errors_decrease_and_pearson():
    """Test the max marginal error never grows between sweeps."""
    pairs = [("x", "u")] * 2 + [("x", "v")] + [("y", "u")] + [("y", "v")] * 3
    seed = make_seed(pairs)
    fit = fit_region(seed, "R1", {"a": {"x": 70, "y": 30}, "b": {"u": 45, "v": 55}}, tol=1e-12)
    history = fit.max_error_history
    assert len(history) > 1
    assert all(b <= a + 1e-15 for a, b in zip(history, history[1:]))
    assert fit.pearson == pytest.approx(1.0)


def test_inconsistent_and_unfittable():
    """Test differing totals and unsupported categories are rejected."""
    seed = make_seed([("x", "u"), ("y", "v")])
    with pytest.raises(InconsistentMarginalsError):
        fit_region(seed, "R1", {"a": {"x": 3, "y": 1}, "b": {"u": 2, "v": 3}})
    with pytest.raises(UnfittableCategoryError):
        fit_region(seed, "R1", {"a": {"x": 3, "y": 1, "z": 1}, "b": {"u": 2, "v": 3}})


def test_parallel_fit_matches_serial():
    """Test worker count does not change fitted weights."""
    seed = make_seed([("x", "u"), ("x", "v"), ("y", "u"), ("y", "v"), ("x", "u")])
    constraints = {
        f"R{k}": {"a": {"x": 10 + k, "y": 5}, "b": {"u": 8, "v": 7 + k}} for k in range(4)
    }
    serial = ipf_fit(seed, constraints, workers=1, progress=False)
    parallel = ipf_fit(seed, constraints, workers=2, progress=False)
    for region_id in constraints:
        np.testing.assert_array_equal(serial[region_id].weights, parallel[region_id].weights)


def test_travel_profile_weighted_shares():
    """Test weighted diary counts normalised per mode."""
    trips = {0: ("Weekday", 8, "CarTaxi"), 1: ("Weekday", 17, "CarTaxi")}
    seed = make_seed([("x", "u"), ("y", "u")], trips)
    fits = ipf_fit(seed, {"R1": {"a": {"x": 3, "y": 1}}}, progress=False)
    profile, zero_modes = travel_profile_from_weights(seed, fits, "R1", "Weekday")
    car = TRAFFIC_MODES.index("CarTaxi")
    assert profile[car, 8] == pytest.approx(0.75)
    assert profile[car, 17] == pytest.approx(0.25)
    assert set(zero_modes) == set(TRAFFIC_MODES) - {"CarTaxi"}
    with pytest.raises(UnknownRegionError):
        travel_profile_from_weights(seed, fits, "R2", "Weekday")


def test_build_travel_profiles_flags_empty_modes():
    """Test modes without travel get a uniform profile and a flag."""
    seed = make_seed([("x", "u")], {0: ("Saturday", 10, "Bicycle")})
    fits = ipf_fit(seed, {"R1": {"a": {"x": 1}}}, progress=False)
    frame, flagged = build_travel_profiles(seed, fits)
    assert len(frame) == 15
    assert len(flagged) == 14
    assert "R1/Saturday/Bicycle" not in flagged
    hours = frame.iloc[:, 3:].to_numpy()
    np.testing.assert_allclose(hours.sum(axis=1), 1.0)


def test_read_marginals(tmp_path):
    """Test marginals are grouped by region and dimension."""
    path = tmp_path / "marginals.csv"
    path.write_text("region_id,dimension,category,target_count\nR1,a,x,3\nR1,a,y,1\nR2,a,x,2\n")
    constraints = read_marginals(path)
    assert constraints == {"R1": {"a": {"x": 3.0, "y": 1.0}}, "R2": {"a": {"x": 2.0}}}
