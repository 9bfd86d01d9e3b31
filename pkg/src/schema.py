"""Canonical names for pollutants, dataset families and feature columns.

Every feature matrix in the package uses the column order defined here:
transport infrastructure (28), transport use (5), meteorology (11),
remote sensing (5), emissions (77), land use (22), temporal (4).
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .errors import ValidationError

POLLUTANTS: Tuple[str, ...] = ("NO", "NO2", "NOx", "O3", "PM10", "PM25", "SO2")

ENVIRONMENT_CLASSES: Tuple[str, ...] = (
    "UrbanBackground",
    "UrbanTraffic",
    "UrbanIndustrial",
    "SuburbanBackground",
    "SuburbanIndustrial",
    "RuralBackground",
)

HIGHWAY_TYPES: Tuple[str, ...] = (
    "Residential",
    "Footway",
    "Service",
    "Primary",
    "Path",
    "Cycleway",
    "Tertiary",
    "Secondary",
    "Unclassified",
    "Trunk",
    "Track",
    "Motorway",
    "Pedestrian",
    "LivingStreet",
)

# Road types that carry motor traffic counts.
MOTOR_HIGHWAY_TYPES: Tuple[str, ...] = (
    "Motorway",
    "Trunk",
    "Primary",
    "Secondary",
    "Tertiary",
    "Unclassified",
    "Residential",
    "LivingStreet",
    "Service",
    "Track",
)

TRAFFIC_MODES: Tuple[str, ...] = ("Bicycle", "CarTaxi", "BusCoach", "LGV", "HGV")

DAY_KINDS: Tuple[str, ...] = ("Weekday", "Saturday", "Sunday")

MET_VARIABLES: Tuple[str, ...] = (
    "u_wind_100m",
    "u_wind_10m",
    "v_wind_100m",
    "v_wind_10m",
    "dewpoint_2m",
    "temperature_2m",
    "boundary_layer_height",
    "downward_uv_radiation",
    "wind_gust_10m",
    "surface_pressure",
    "total_column_rainwater",
)

REMOTE_SENSING_VARIABLES: Tuple[str, ...] = ("NO2", "CO", "HCHO", "O3", "AAI")

EMISSION_SPECIES: Tuple[str, ...] = ("PM25", "PM10", "NMVOC", "NH3", "SOx", "CO", "NOx")

SNAP_SECTORS: Tuple[int, ...] = tuple(range(1, 12))

LAND_USE_CLASSES: Tuple[str, ...] = (
    "unclassified",
    "broadleaved_woodland",
    "coniferous_woodland",
    "arable",
    "improved_grassland",
    "neutral_grassland",
    "calcareous_grassland",
    "acid_grassland",
    "fen_marsh_swamp",
    "heather",
    "heather_grassland",
    "bog",
    "inland_rock",
    "saltwater",
    "freshwater",
    "supralittoral_rock",
    "supralittoral_sediment",
    "littoral_rock",
    "littoral_sediment",
    "saltmarsh",
    "urban",
    "suburban",
)

TEMPORAL_ELEMENTS: Tuple[str, ...] = ("hour", "day_of_week", "week_number", "month")

# 25 m raster pixels inside a 1 km cell.
LAND_USE_PIXEL_SIZE_M = 25.0

DISTANCE_SENTINEL_M = 1.0e6


@dataclass(frozen=True)
class FeatureColumn:
    """One column of the feature matrix."""

    family: str
    element: str

    @property
    def name(self) -> str:
        return f"{self.family}:{self.element}"


def _family_elements() -> Dict[str, List[str]]:
    return {
        "TransportInfrastructure": (
            [f"distance_{t}" for t in HIGHWAY_TYPES] + [f"length_{t}" for t in HIGHWAY_TYPES]
        ),
        "TransportUse": list(TRAFFIC_MODES),
        "Meteorology": list(MET_VARIABLES),
        "RemoteSensing": list(REMOTE_SENSING_VARIABLES),
        "Emissions": [f"{s}_snap{k:02d}" for s in EMISSION_SPECIES for k in SNAP_SECTORS],
        "LandUse": list(LAND_USE_CLASSES),
        "Temporal": list(TEMPORAL_ELEMENTS),
    }


FAMILY_ELEMENTS: Dict[str, List[str]] = _family_elements()
FAMILIES: Tuple[str, ...] = tuple(FAMILY_ELEMENTS)

FEATURE_COLUMNS: Tuple[FeatureColumn, ...] = tuple(
    FeatureColumn(family, element)
    for family, elements in FAMILY_ELEMENTS.items()
    for element in elements
)
FEATURE_NAMES: Tuple[str, ...] = tuple(c.name for c in FEATURE_COLUMNS)

FAMILY_PRESETS: Dict[str, Tuple[str, ...]] = {
    "All": FAMILIES,
    "Global": ("Temporal", "Meteorology", "RemoteSensing"),
    "Forecasting": ("TransportInfrastructure", "LandUse", "Meteorology", "Temporal"),
}


def resolve_families(selection: Sequence[str]) -> Tuple[str, ...]:
    """
    Expand family labels and presets into canonical family order.

    Args:
        selection: Family labels and/or preset names (All, Global, Forecasting)

    Returns:
        Selected families, ordered as in FAMILIES

    Raises:
        ValidationError: If the selection is empty or names an unknown label
    """
    chosen = set()
    for label in selection:
        label = label.strip()
        if not label:
            continue
        if label in FAMILY_PRESETS:
            chosen.update(FAMILY_PRESETS[label])
        elif label in FAMILY_ELEMENTS:
            chosen.add(label)
        else:
            raise ValidationError(f"Unknown dataset family or preset: {label!r}")
    if not chosen:
        raise ValidationError("Family selection is empty")
    return tuple(f for f in FAMILIES if f in chosen)


def columns_for_families(families: Sequence[str]) -> List[str]:
    """Feature names belonging to the given families, in canonical order."""
    wanted = set(resolve_families(families))
    return [c.name for c in FEATURE_COLUMNS if c.family in wanted]


def schema_hash(names: Sequence[str]) -> str:
    """Short stable hash of an ordered list of feature names."""
    return hashlib.sha256("\n".join(names).encode("utf-8")).hexdigest()[:16]
