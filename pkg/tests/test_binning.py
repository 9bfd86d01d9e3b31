"""Tests for binning module."""

import numpy as np
import pytest

from src.binning import build_bin_mapper
from src.errors import ValidationError


def test_few_distinct_values_one_bin_each():
    """Test 3 distinct values map to 3 separate bins."""
    values = np.array([[1.0], [5.0], [3.0], [5.0], [1.0]])
    mapper = build_bin_mapper(values)
    assert mapper.n_bins.tolist() == [3]
    assert mapper.transform(values)[:, 0].tolist() == [0, 2, 1, 2, 0]


def test_uniform_values_balanced_bins():
    """Test 10,000 uniform values fill 255 bins within a factor of two."""
    rng = np.random.default_rng(0)
    values = rng.uniform(size=(10_000, 1))
    mapper = build_bin_mapper(values, max_bin=255)
    assert mapper.n_bins.tolist() == [255]
    counts = np.bincount(mapper.transform(values)[:, 0], minlength=255)
    assert counts.max() <= 2 * counts.min()


def test_constant_feature_single_bin():
    """Test a constant column has one bin."""
    mapper = build_bin_mapper(np.full((50, 1), 4.2))
    assert mapper.n_bins.tolist() == [1]
    assert (mapper.transform(np.array([[4.2], [-1.0], [9.0]])) == 0).all()


def test_binning_is_monotone():
    """Test raw order implies bin order."""
    rng = np.random.default_rng(1)
    train = rng.standard_exponential(size=(5000, 2))
    mapper = build_bin_mapper(train, max_bin=32)
    probe = np.sort(rng.normal(0, 3, size=(2000, 2)), axis=0)
    binned = mapper.transform(probe).astype(int)
    assert (np.diff(binned, axis=0) >= 0).all()
    assert (mapper.n_bins <= 32).all()


def test_missing_values_reserved_bin():
    """Test NaN goes to the reserved bin and is ignored when fitting cuts."""
    values = np.array([[1.0], [np.nan], [2.0]])
    mapper = build_bin_mapper(values)
    assert mapper.n_bins.tolist() == [2]
    assert mapper.transform(values)[:, 0].tolist() == [0, mapper.missing_bin, 1]


def test_invalid_inputs():
    """Test empty, infinite and mis-shaped inputs are rejected."""
    with pytest.raises(ValidationError):
        build_bin_mapper(np.empty((0, 3)))
    with pytest.raises(ValidationError):
        build_bin_mapper(np.array([[np.inf]]))
    mapper = build_bin_mapper(np.ones((3, 2)))
    with pytest.raises(ValidationError):
        mapper.transform(np.ones((3, 3)))
