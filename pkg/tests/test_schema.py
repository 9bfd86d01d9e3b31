"""Tests for schema module."""

import pytest

from src.errors import ValidationError
from src.schema import (
    FAMILIES,
    FAMILY_ELEMENTS,
    FEATURE_COLUMNS,
    FEATURE_NAMES,
    columns_for_families,
    resolve_families,
)


def test_feature_count_is_152():
    """Test the canonical matrix has 152 columns in the documented family sizes."""
    sizes = [len(FAMILY_ELEMENTS[f]) for f in FAMILIES]
    assert sizes == [28, 5, 11, 5, 77, 22, 4]
    assert len(FEATURE_NAMES) == 152
    assert len(set(FEATURE_NAMES)) == 152


def test_columns_follow_family_order():
    """Test columns are grouped by family in canonical order."""
    families = [c.family for c in FEATURE_COLUMNS]
    boundaries = [families.index(f) for f in FAMILIES]
    assert boundaries == sorted(boundaries)
    assert FEATURE_NAMES[0] == "TransportInfrastructure:distance_Residential"
    assert FEATURE_NAMES[-1] == "Temporal:month"


def test_preset_column_counts():
    """Test subset presets resolve to the expected column counts."""
    assert len(columns_for_families(["All"])) == 152
    assert len(columns_for_families(["Global"])) == 20
    assert len(columns_for_families(["Temporal"])) == 4
    assert len(columns_for_families(["Forecasting"])) == 28 + 11 + 22 + 4


def test_resolve_families_is_canonical_and_deduplicated():
    """Test mixed labels come back once each in canonical order."""
    assert resolve_families(["Temporal", "Meteorology", "Temporal"]) == ("Meteorology", "Temporal")


def test_resolve_families_rejects_unknown_label():
    """Test that an unknown family label is a validation error."""
    with pytest.raises(ValidationError):
        resolve_families(["Traffic"])


def test_resolve_families_rejects_empty():
    """Test that an empty selection is a validation error."""
    with pytest.raises(ValidationError):
        resolve_families([" "])
