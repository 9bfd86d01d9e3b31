"""Synthetic world generator: a small study area with every input file and known ground truth.

The generated measurements follow a fixed formula over feature values, so
tests and acceptance runs can recompute the truth row by row:

    z = b0 + b_transport * log1p(sum of TransportUse columns)
           - b_blh * boundary_layer_height / 1000
           - b_wind * hypot(u_wind_10m, v_wind_10m)
           + b_urban * (urban + suburban pixels) / pixels_per_cell
           + b_nox * log1p(Emissions NOx_snap07)
           + pollutant_offset
    value = exp(z + noise_sigma * N(0, 1))

The planted adversarial station (first RuralBackground site, placed in the
road-free north-west corner) reports exp(2 * mean(z) - z + noise) instead:
its level matches the formula but its temporal pattern is inverted.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
import shapely
from shapely.geometry import LineString

from .errors import ValidationError
from .feature_store import INPUT_FILES, load_feature_store
from .grid import build_study_area, snap_stations, write_study_area
from .ingest import LAND_USE_COLUMNS, format_timestamps, pixels_per_cell, read_stations
from .microsim import SurveySeed, build_travel_profiles, ipf_fit
from .schema import (
    DAY_KINDS,
    EMISSION_SPECIES,
    ENVIRONMENT_CLASSES,
    FEATURE_NAMES,
    LAND_USE_CLASSES,
    MET_VARIABLES,
    MOTOR_HIGHWAY_TYPES,
    POLLUTANTS,
    REMOTE_SENSING_VARIABLES,
    SNAP_SECTORS,
    TRAFFIC_MODES,
)
from .transport import RoadSegment, road_structural_features
from .writer import Writer

logger = logging.getLogger(__name__)

SURVEY_FILES = {
    "attributes": "survey_attributes.csv",
    "diary": "survey_diary.csv",
    "marginals": "marginals.csv",
}

GENERATING_COEFFICIENTS: Dict[str, float] = {
    "intercept": 1.5,
    "transport_use": 0.25,
    "boundary_layer_height": 0.8,
    "wind_speed_10m": 0.08,
    "urban_share": 1.0,
    "nox_road_transport": 0.15,
}

POLLUTANT_OFFSETS: Dict[str, float] = {
    "NO": -0.3,
    "NO2": 0.0,
    "NOx": 0.4,
    "O3": 0.2,
    "PM10": -0.2,
    "PM25": -0.5,
    "SO2": -1.2,
}

GENERATING_FORMULA = (
    "z = intercept + transport_use*log1p(sum TransportUse:*)"
    " - boundary_layer_height*Meteorology:boundary_layer_height/1000"
    " - wind_speed_10m*hypot(Meteorology:u_wind_10m, Meteorology:v_wind_10m)"
    " + urban_share*(LandUse:urban + LandUse:suburban)/pixels_per_cell"
    " + nox_road_transport*log1p(Emissions:NOx_snap07) + pollutant_offset;"
    " value = exp(z + noise_sigma*N(0,1)); adversarial station uses 2*mean(z) - z"
)

DROP_RATE = 0.03
REMOTE_SENSING_DROP_RATE = 0.02
N_RESPONDENTS = 80

FLOW_PER_METER = {
    "Motorway": 60.0,
    "Trunk": 40.0,
    "Primary": 30.0,
    "Secondary": 20.0,
    "Tertiary": 10.0,
    "Unclassified": 5.0,
    "Residential": 3.0,
    "LivingStreet": 1.0,
    "Service": 1.0,
    "Track": 0.2,
}
MODE_SHARE = {"Bicycle": 0.02, "CarTaxi": 0.8, "BusCoach": 0.03, "LGV": 0.1, "HGV": 0.05}

ROAD_TRANSPORT_FACTORS = {"NOx": 10.0, "CO": 20.0, "NMVOC": 3.0, "PM10": 0.8, "PM25": 0.5, "SOx": 0.1, "NH3": 0.2}
DOMESTIC_FACTORS = {"PM25": 3.0, "PM10": 3.5, "CO": 20.0, "NOx": 2.0, "SOx": 0.5, "NMVOC": 1.0}
POWER_PLANT = {"SOx": 50.0, "NOx": 30.0, "PM10": 2.0, "PM25": 1.0}


@dataclass(frozen=True)
class SyntheticWorldSpec:
    """Parameters of a generated world."""

    rows: int = 20
    cols: int = 20
    cell_size: float = 1000.0
    origin: Tuple[float, float] = (400000.0, 300000.0)
    years: Tuple[int, ...] = (2014, 2015, 2016, 2017, 2018)
    stations_per_class: int = 2
    noise_sigma: float = 0.1
    seed: int = 0
    adversarial_station: bool = True
    negative_rate: float = 0.0
    hour_step: int = 1
    n_regions: int = 2
    met_points_per_side: int = 2
    pollutants: Tuple[str, ...] = ("NO2",)
    coefficients: Dict[str, float] = field(default_factory=lambda: dict(GENERATING_COEFFICIENTS))

    def __post_init__(self):
        if self.rows < 6 or self.cols < 6:
            raise ValidationError("Synthetic worlds need at least 6 x 6 cells")
        pixels_per_cell(self.cell_size)
        if not self.years:
            raise ValidationError("Synthetic world needs at least one year")
        if self.hour_step < 1:
            raise ValidationError("hour_step must be at least 1")
        if self.stations_per_class < 0:
            raise ValidationError("stations_per_class must be nonnegative")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        if not 0.0 <= self.negative_rate < 1.0:
            raise ValidationError("negative_rate must be in [0, 1)")
        if not 1 <= self.n_regions <= self.cols:
            raise ValidationError("n_regions must be between 1 and the number of columns")
        if self.met_points_per_side < 1:
            raise ValidationError("met_points_per_side must be at least 1")
        unknown = sorted(set(self.pollutants) - set(POLLUTANTS))
        if unknown or not self.pollutants:
            raise ValidationError(f"Unknown or empty pollutant list: {unknown}")
        missing = sorted(set(GENERATING_COEFFICIENTS) - set(self.coefficients))
        if missing:
            raise ValidationError(f"Missing generating coefficients: {missing}")


def world_timeline(years, hour_step: int = 1) -> pd.DatetimeIndex:
    """Hourly UTC timestamps covering the given years, every hour_step hours."""
    years = sorted(int(y) for y in years)
    hours = pd.date_range(f"{years[0]}-01-01", f"{years[-1] + 1}-01-01", freq="h", inclusive="left")
    hours = hours[hours.year.isin(years)]
    return hours[::hour_step]


def log_concentration(features: np.ndarray, names, coefficients: Dict[str, float], cell_size: float) -> np.ndarray:
    """
    The documented generating function, before noise and pollutant offset.

    Args:
        features: (n, k) feature rows
        names: Column names of the rows
        coefficients: GENERATING_COEFFICIENTS-style mapping
        cell_size: Cell edge in meters (for the land-use pixel total)

    Returns:
        z per row
    """
    position = {n: i for i, n in enumerate(names)}

    def col(name: str) -> np.ndarray:
        return features[:, position[name]]

    transport = features[:, [position[f"TransportUse:{m}"] for m in TRAFFIC_MODES]].sum(axis=1)
    wind = np.hypot(col("Meteorology:u_wind_10m"), col("Meteorology:v_wind_10m"))
    urban = (col("LandUse:urban") + col("LandUse:suburban")) / pixels_per_cell(cell_size)
    c = coefficients
    return (
        c["intercept"]
        + c["transport_use"] * np.log1p(transport)
        - c["boundary_layer_height"] * col("Meteorology:boundary_layer_height") / 1000.0
        - c["wind_speed_10m"] * wind
        + c["urban_share"] * urban
        + c["nox_road_transport"] * np.log1p(col("Emissions:NOx_snap07"))
    )


class WorldBuilder:
    """
    Writes one synthetic world. Every random draw comes from a single
    generator seeded by the spec, in a fixed order.
    """

    def __init__(self, spec: SyntheticWorldSpec, out_dir: Path):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.writer = Writer(str(out_dir))
        self.area = build_study_area(
            spec.origin, spec.cell_size, [(r, c) for r in range(spec.rows) for c in range(spec.cols)]
        )
        self.timeline = world_timeline(spec.years, spec.hour_step)
        self.region_ids = [f"R{k + 1}" for k in range(spec.n_regions)]

        centre_r, centre_c = (spec.rows - 1) / 2.0, (spec.cols - 1) / 2.0
        sigma = 0.2 * min(spec.rows, spec.cols)
        d2 = (self.area.rows - centre_r) ** 2 + (self.area.cols - centre_c) ** 2
        self.urban_share = 0.8 * np.exp(-d2 / (2.0 * sigma**2))
        self.suburban_share = 0.5 * np.exp(-d2 / (2.0 * (1.8 * sigma) ** 2)) * (1.0 - self.urban_share)
        self.corner_cell = self.area.cell_id_at(spec.rows - 2, 1)
        self.road_jitter = self.rng.uniform(-0.01, 0.01, size=4)

    def _xy(self, fx: float, fy: float) -> Tuple[float, float]:
        s = self.spec
        return (s.origin[0] + fx * s.cols * s.cell_size, s.origin[1] + fy * s.rows * s.cell_size)

    def _line(self, *points: Tuple[float, float]) -> LineString:
        return LineString([self._xy(fx, fy) for fx, fy in points])

    def write_grid(self) -> None:
        name = INPUT_FILES["study_area"]
        write_study_area(self.area, self.writer.path(name))
        self.writer.record(name)
        region = (self.area.cols * self.spec.n_regions) // self.spec.cols
        frame = pd.DataFrame({"cell_id": self.area.cell_ids, "region_id": [self.region_ids[k] for k in region]})
        self.writer.write_csv(INPUT_FILES["regions"], frame)

    def road_network(self, year_index: int) -> List[RoadSegment]:
        """Road snapshot for one year; each later year adds one residential street."""
        jitter = self.road_jitter
        lines = [
            ("Motorway", self._line((0.0, 0.3 + jitter[0]), (1.0, 0.3 + jitter[1]))),
            ("Primary", self._line((0.5 + jitter[2], 0.0), (0.5 + jitter[3], 1.0))),
            ("Secondary", self._line((0.5, 0.5), (0.75, 0.7), (1.0, 0.9))),
            ("Tertiary", self._line((0.3, 0.45), (0.7, 0.55))),
            ("Service", self._line((0.55, 0.28), (0.65, 0.32))),
            ("Footway", self._line((0.45, 0.45), (0.55, 0.55))),
            ("Cycleway", self._line((0.4, 0.6), (0.6, 0.6))),
            ("Track", self._line((0.1, 0.1), (0.3, 0.12))),
            ("Pedestrian", self._line((0.48, 0.5), (0.52, 0.5))),
        ]
        for k in range(5):
            f = 0.4 + 0.05 * k
            lines.append(("Residential", self._line((f, 0.4), (f, 0.6))))
            lines.append(("Residential", self._line((0.4, f), (0.6, f))))
        for k in range(year_index):
            f = 0.62 + 0.03 * k
            lines.append(("Residential", self._line((f, 0.35), (f, 0.45))))
        return [RoadSegment(f"w{i:04d}", highway_type, line) for i, (highway_type, line) in enumerate(lines)]

    def write_roads(self) -> np.ndarray:
        """Write one snapshot per year; return motor road length per cell of the first year."""
        motor_length = None
        for year_index, year in enumerate(sorted(self.spec.years)):
            segments = self.road_network(year_index)
            frame = pd.DataFrame(
                {
                    "segment_id": [s.segment_id for s in segments],
                    "highway_type": [s.highway_type for s in segments],
                    "wkt_linestring": [shapely.to_wkt(s.line, rounding_precision=3, trim=True) for s in segments],
                }
            )
            self.writer.write_csv(f"roads_{year}.csv", frame)
            if motor_length is None:
                structural = road_structural_features(self.area, segments)
                motor_length = structural[[f"length_{t}" for t in MOTOR_HIGHWAY_TYPES]].sum(axis=1).to_numpy()
        return motor_length

    def write_traffic_means(self) -> None:
        records = []
        for k, region_id in enumerate(self.region_ids):
            region_factor = 1.2 - 0.4 * k / max(1, len(self.region_ids) - 1)
            for highway_type in MOTOR_HIGHWAY_TYPES:
                for mode in TRAFFIC_MODES:
                    noise = float(self.rng.lognormal(0.0, 0.1))
                    flow = FLOW_PER_METER[highway_type] * MODE_SHARE[mode] * region_factor * noise
                    records.append((region_id, highway_type, mode, flow))
        frame = pd.DataFrame(records, columns=["region_id", "highway_type", "mode", "mean_flow_per_meter"])
        self.writer.write_csv(INPUT_FILES["traffic_means"], frame)

    def survey(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """Respondent attributes and full 24-hour diaries for each day kind."""
        attributes = []
        diary = []
        for i in range(N_RESPONDENTS):
            employed = i % 5 < 3
            car = i % 4 < 2
            attributes.append((f"p{i:03d}", "employed" if employed else "other", "yes" if car else "no"))
            depart = int(self.rng.integers(7, 9))
            back = int(self.rng.integers(16, 19))
            days = {kind: ["none"] * 24 for kind in DAY_KINDS}
            weekday, saturday, sunday = days["Weekday"], days["Saturday"], days["Sunday"]
            if employed and car and i % 20 == 0:
                for h in (depart, 11, 14, back):
                    weekday[h] = "LGV"
            elif employed and car and i % 20 == 1:
                for h in (2, 3, 4, 20, 21):
                    weekday[h] = "HGV"
                saturday[6] = saturday[7] = "HGV"
            elif employed and car:
                weekday[depart] = weekday[back] = "CarTaxi"
            elif employed:
                mode = "BusCoach" if i % 2 else "Bicycle"
                weekday[depart] = weekday[back] = mode
            elif car:
                weekday[10] = weekday[14] = "CarTaxi"
            else:
                weekday[11] = "BusCoach"
                if i % 3 == 0:
                    weekday[15] = "Bicycle"
            if car:
                saturday[11] = saturday[15] = "CarTaxi"
                sunday[13] = "CarTaxi"
            else:
                saturday[12] = "BusCoach"
                saturday[10] = "Bicycle"
                if i % 2:
                    sunday[14] = "Bicycle"
            for kind in DAY_KINDS:
                diary += [(f"p{i:03d}", kind, h, days[kind][h]) for h in range(24)]
        return (
            pd.DataFrame(attributes, columns=["respondent_id", "employment", "car"]),
            pd.DataFrame(diary, columns=["respondent_id", "day_kind", "hour", "mode"]),
        )

    def marginals(self) -> pd.DataFrame:
        records = []
        for k, region_id in enumerate(self.region_ids):
            total = 1000 - 100 * k
            employed = round(total * (0.6 - 0.1 * k))
            cars = round(total * (0.5 + 0.1 * k))
            records += [
                (region_id, "employment", "employed", employed),
                (region_id, "employment", "other", total - employed),
                (region_id, "car", "yes", cars),
                (region_id, "car", "no", total - cars),
            ]
        return pd.DataFrame(records, columns=["region_id", "dimension", "category", "target_count"])

    def write_travel_profiles(self) -> List[str]:
        attributes, diary = self.survey()
        marginals = self.marginals()
        self.writer.write_csv(SURVEY_FILES["attributes"], attributes)
        self.writer.write_csv(SURVEY_FILES["diary"], diary)
        self.writer.write_csv(SURVEY_FILES["marginals"], marginals)

        seed = SurveySeed.from_frames(attributes, diary)
        constraints: Dict[str, Dict[str, Dict[str, float]]] = {}
        for rec in marginals.itertuples(index=False):
            constraints.setdefault(rec.region_id, {}).setdefault(rec.dimension, {})[rec.category] = float(
                rec.target_count
            )
        fits = ipf_fit(seed, constraints, workers=1, progress=False)
        profiles, flagged = build_travel_profiles(seed, fits)
        self.writer.write_csv(INPUT_FILES["travel_profiles"], profiles)
        return flagged

    def met_series(self) -> Dict[str, np.ndarray]:
        """Per-variable (timestamps, points) arrays from smooth seasonal and diurnal signals."""
        stamps = self.timeline
        hours_since = np.asarray((stamps - pd.Timestamp("2000-01-01")) / pd.Timedelta(hours=1), dtype=np.float64)
        doy = np.asarray(stamps.dayofyear, dtype=np.float64)
        hour = np.asarray(stamps.hour, dtype=np.float64)
        season = np.sin(2 * np.pi * (doy - 110.0) / 365.25)
        daylight = np.maximum(0.0, np.sin(2 * np.pi * (hour - 6.0) / 24.0))

        u10 = 3.0 + 2.0 * np.sin(2 * np.pi * hours_since / (24 * 5.3))
        v10 = 1.0 + 2.0 * np.cos(2 * np.pi * hours_since / (24 * 7.1))
        temperature = 283.0 + 8.0 * season + 4.0 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
        base = {
            "u_wind_100m": 1.4 * u10,
            "u_wind_10m": u10,
            "v_wind_100m": 1.4 * v10,
            "v_wind_10m": v10,
            "dewpoint_2m": temperature - 4.0,
            "temperature_2m": temperature,
            "boundary_layer_height": 600.0 + 500.0 * daylight + 200.0 * season,
            "downward_uv_radiation": daylight * (200.0 + 100.0 * season),
            "wind_gust_10m": 1.5 * np.hypot(u10, v10) + 1.0,
            "surface_pressure": 101325.0 + 800.0 * np.sin(2 * np.pi * hours_since / (24 * 9.7)),
            "total_column_rainwater": 0.1 + 0.1 * (1.0 + np.sin(2 * np.pi * hours_since / (24 * 3.3))),
        }
        scale = {v: 0.02 * (np.abs(base[v]).mean() + 1e-3) for v in MET_VARIABLES}
        n_points = self.spec.met_points_per_side**2
        series = {}
        for variable in MET_VARIABLES:
            offsets = self.rng.normal(0.0, scale[variable], size=n_points)
            noise = self.rng.normal(0.0, scale[variable], size=(len(stamps), n_points))
            values = base[variable][:, None] + offsets[None, :] + noise
            if variable in ("boundary_layer_height", "downward_uv_radiation", "total_column_rainwater"):
                values = np.maximum(values, 0.0)
            series[variable] = values
        return series

    def write_meteorology(self) -> None:
        n = self.spec.met_points_per_side
        points = [self._xy((i + 0.5) / n, (j + 0.5) / n) for j in range(n) for i in range(n)]
        xs = np.array([p[0] for p in points])
        ys = np.array([p[1] for p in points])
        stamps = format_timestamps(self.timeline)
        n_t = len(stamps)
        parts = []
        for variable, values in self.met_series().items():
            parts.append(
                pd.DataFrame(
                    {
                        "variable": variable,
                        "x": np.tile(xs, n_t),
                        "y": np.tile(ys, n_t),
                        "timestamp": np.repeat(stamps, len(points)),
                        "value": values.ravel(),
                    }
                )
            )
        self.writer.write_csv(INPUT_FILES["met_samples"], pd.concat(parts, ignore_index=True))

    def write_remote_sensing(self) -> int:
        base = {"NO2": 20.0, "CO": 0.03, "HCHO": 0.0001, "O3": 0.12, "AAI": 0.5}
        urban_weight = {"NO2": 1.5, "CO": 0.5, "HCHO": 0.3, "O3": -0.2, "AAI": 0.1}
        n = len(self.area)
        records = []
        dropped = 0
        for variable in REMOTE_SENSING_VARIABLES:
            for month in range(1, 13):
                seasonal = 1.0 + 0.2 * math.sin(2 * math.pi * (month - 1) / 12.0)
                noise = self.rng.normal(0.0, 0.05, size=n)
                keep = self.rng.random(n) >= REMOTE_SENSING_DROP_RATE
                values = base[variable] * seasonal * (1.0 + urban_weight[variable] * self.urban_share + noise)
                dropped += int((~keep).sum())
                records.append(
                    pd.DataFrame(
                        {"variable": variable, "cell_id": self.area.cell_ids[keep], "month": month, "value": values[keep]}
                    )
                )
        self.writer.write_csv(INPUT_FILES["remote_sensing"], pd.concat(records, ignore_index=True))
        return dropped

    def write_emissions(self, motor_length: np.ndarray, land_use: np.ndarray) -> None:
        pixels = float(pixels_per_cell(self.spec.cell_size))
        urban = (land_use[:, LAND_USE_CLASSES.index("urban")] + land_use[:, LAND_USE_CLASSES.index("suburban")]) / pixels
        arable = land_use[:, LAND_USE_CLASSES.index("arable")] / pixels
        km = motor_length / 1000.0
        power_cell = self.area.cell_id_at(1, self.spec.cols - 2)

        tables = []

        def add(species: str, sector: int, values: np.ndarray) -> None:
            nonzero = values > 0
            tables.append(
                pd.DataFrame(
                    {
                        "species": species,
                        "snap_sector": sector,
                        "cell_id": self.area.cell_ids[nonzero],
                        "annual_value": values[nonzero],
                    }
                )
            )

        for species in EMISSION_SPECIES:
            if species in POWER_PLANT:
                point = np.zeros(len(self.area))
                point[power_cell] = POWER_PLANT[species]
                add(species, 1, point)
            if species in DOMESTIC_FACTORS:
                add(species, 2, DOMESTIC_FACTORS[species] * urban)
            add(species, 7, ROAD_TRANSPORT_FACTORS[species] * km)
        add("NH3", 10, 8.0 * arable)
        self.writer.write_csv(INPUT_FILES["emissions"], pd.concat(tables, ignore_index=True))

        week_hours = np.arange(168)
        day, hour = week_hours // 24, week_hours % 24
        weekday = day < 5
        rush = np.exp(-((hour - 8) ** 2) / 2.0) + 0.9 * np.exp(-((hour - 17) ** 2) / 2.0)
        traffic = 0.3 + np.where(weekday, rush, 0.4 * np.exp(-((hour - 13) ** 2) / 8.0))
        heating = 0.5 + np.exp(-((hour - 7) ** 2) / 2.0) + np.exp(-((hour - 19) ** 2) / 2.0)
        hour_records = []
        for sector in SNAP_SECTORS:
            factors = {7: traffic, 2: heating}.get(sector, np.ones(168))
            hour_records.append(pd.DataFrame({"snap_sector": sector, "week_hour": week_hours, "factor": factors}))
        self.writer.write_csv(INPUT_FILES["emissions_hour_factors"], pd.concat(hour_records, ignore_index=True))

        months = np.arange(1, 13)
        month_records = []
        for species in EMISSION_SPECIES:
            for sector in SNAP_SECTORS:
                if sector == 2:
                    factors = 1.0 + 0.5 * np.cos(2 * np.pi * (months - 1) / 12.0)
                elif sector == 10:
                    factors = 1.0 + 0.4 * np.cos(2 * np.pi * (months - 4) / 12.0)
                else:
                    factors = np.ones(12)
                month_records.append(
                    pd.DataFrame({"species": species, "snap_sector": sector, "month": months, "factor": factors})
                )
        self.writer.write_csv(INPUT_FILES["emissions_month_factors"], pd.concat(month_records, ignore_index=True))

    def land_use(self) -> np.ndarray:
        """Pixel counts per cell: urban core, suburban ring, farmland outside."""
        pixels = pixels_per_cell(self.spec.cell_size)
        counts = np.zeros((len(self.area), len(LAND_USE_CLASSES)), dtype=np.int64)
        rural_mix = {
            "arable": 0.45,
            "improved_grassland": 0.3,
            "broadleaved_woodland": 0.15,
            "freshwater": 0.05,
            "unclassified": 0.05,
        }
        for cell_id in self.area.cell_ids:
            probs = np.zeros(len(LAND_USE_CLASSES))
            probs[LAND_USE_CLASSES.index("urban")] = self.urban_share[cell_id]
            probs[LAND_USE_CLASSES.index("suburban")] = self.suburban_share[cell_id]
            rest = 1.0 - probs.sum()
            for name, share in rural_mix.items():
                probs[LAND_USE_CLASSES.index(name)] = rest * share
            counts[cell_id] = self.rng.multinomial(pixels, probs / probs.sum())
        return counts

    def write_land_use(self, counts: np.ndarray) -> None:
        frame = pd.DataFrame(counts, columns=LAND_USE_COLUMNS)
        frame.insert(0, "cell_id", self.area.cell_ids)
        self.writer.write_csv(INPUT_FILES["land_use"], frame)

    def station_cells(self, motor_length: np.ndarray) -> List[Tuple[str, int]]:
        """Pick (environment_class, cell_id) per station from urban-share bands."""
        u = self.urban_share
        bands = {
            "UrbanTraffic": (u >= 0.4) & (motor_length > 0),
            "UrbanBackground": u >= 0.4,
            "UrbanIndustrial": u >= 0.25,
            "SuburbanBackground": (u >= 0.05) & (u < 0.4),
            "SuburbanIndustrial": (u >= 0.05) & (u < 0.4),
            "RuralBackground": u < 0.05,
        }
        used = set()
        chosen = []
        for environment_class in ENVIRONMENT_CLASSES:
            needed = self.spec.stations_per_class
            if environment_class == "RuralBackground" and self.spec.adversarial_station and needed:
                chosen.append((environment_class, self.corner_cell))
                used.add(self.corner_cell)
                needed -= 1
            candidates = np.array([c for c in np.flatnonzero(bands[environment_class]) if c not in used], dtype=np.int64)
            if candidates.size < needed:
                raise ValidationError(f"Grid too small to place {needed} {environment_class} stations")
            if needed:
                picks = self.rng.choice(candidates, size=needed, replace=False)
                chosen += [(environment_class, int(c)) for c in picks]
                used.update(int(c) for c in picks)
        return chosen

    def write_stations(self, motor_length: np.ndarray) -> pd.DataFrame:
        records = []
        for k, (environment_class, cell_id) in enumerate(self.station_cells(motor_length)):
            cell = self.area.cell(cell_id)
            dx, dy = self.rng.uniform(-0.45, 0.45, size=2) * self.spec.cell_size
            records.append(
                (f"S{k + 1:02d}", f"Station {k + 1:02d} ({environment_class})", environment_class,
                 cell.centroid_x + dx, cell.centroid_y + dy)
            )
        frame = pd.DataFrame(records, columns=["station_id", "name", "environment_class", "x", "y"])
        self.writer.write_csv(INPUT_FILES["stations"], frame)
        return frame

    def write_measurements(self) -> Tuple[int, int]:
        """Evaluate the generating function at every station hour and write the target file."""
        store = load_feature_store(self.writer.out_dir)
        stations = read_stations(self.writer.out_dir / INPUT_FILES["stations"])
        sites = snap_stations(stations, self.area)
        adversarial = self._adversarial_id(stations)
        stamps = self.timeline
        iso = format_timestamps(stamps)

        parts = []
        negatives = 0
        for site in sites:
            features = store.rows(np.full(len(stamps), site.snapped_cell, dtype=np.int64), stamps)
            z = log_concentration(features, FEATURE_NAMES, self.spec.coefficients, self.spec.cell_size)
            if site.station_id == adversarial:
                z = 2.0 * z.mean() - z
            for pollutant in self.spec.pollutants:
                noise = self.rng.normal(0.0, 1.0, size=len(stamps))
                values = np.exp(z + POLLUTANT_OFFSETS[pollutant] + self.spec.noise_sigma * noise)
                keep = self.rng.random(len(stamps)) >= DROP_RATE
                flip = self.rng.random(len(stamps)) < self.spec.negative_rate
                artefacts = -self.rng.uniform(0.1, 5.0, size=len(stamps))
                values = np.where(flip, artefacts, values)
                negatives += int((flip & keep).sum())
                parts.append(
                    pd.DataFrame(
                        {
                            "station_id": site.station_id,
                            "pollutant": pollutant,
                            "timestamp_iso8601": iso[keep],
                            "value": values[keep],
                        }
                    )
                )
        columns = ["station_id", "pollutant", "timestamp_iso8601", "value"]
        frame = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=columns)
        self.writer.write_csv(INPUT_FILES["measurements"], frame[columns])
        return len(frame), negatives

    def _adversarial_id(self, stations: pd.DataFrame):
        if not self.spec.adversarial_station:
            return None
        rural = stations[stations["environment_class"] == "RuralBackground"]
        return str(rural["station_id"].iloc[0]) if len(rural) else None

    def build(self) -> dict:
        """Write every file and the manifest; return the manifest payload."""
        self.write_grid()
        motor_length = self.write_roads()
        self.write_traffic_means()
        flagged = self.write_travel_profiles()
        self.write_meteorology()
        rs_dropped = self.write_remote_sensing()
        land_use = self.land_use()
        self.write_emissions(motor_length, land_use)
        self.write_land_use(land_use)
        stations = self.write_stations(motor_length)
        n_measurements, negatives = self.write_measurements()

        spec = asdict(self.spec)
        spec["origin"] = list(self.spec.origin)
        spec["years"] = list(self.spec.years)
        spec["pollutants"] = list(self.spec.pollutants)
        payload = {
            "spec": spec,
            "generating_function": {
                "formula": GENERATING_FORMULA,
                "coefficients": dict(self.spec.coefficients),
                "pollutant_offsets": {p: POLLUTANT_OFFSETS[p] for p in self.spec.pollutants},
                "noise_sigma": self.spec.noise_sigma,
            },
            "adversarial_station": self._adversarial_id(stations),
            "stations": len(stations),
            "measurements": n_measurements,
            "negative_artefacts": negatives,
            "remote_sensing_dropped": rs_dropped,
            "flagged_travel_profiles": flagged,
        }
        self.writer.write_manifest(extra=payload)
        return payload


def generate_world(spec: SyntheticWorldSpec, out_dir: Path) -> dict:
    """
    Generate a synthetic world under out_dir.

    The same spec (seed included) always produces a bytewise-identical tree.

    Args:
        spec: World parameters
        out_dir: Target directory, created if needed

    Returns:
        Manifest payload (spec, generating function, adversarial station, counts)
    """
    logger.info(
        f"Generating {spec.rows}x{spec.cols} world, {len(spec.years)} years, "
        f"{spec.stations_per_class * len(ENVIRONMENT_CLASSES)} stations, seed {spec.seed}"
    )
    payload = WorldBuilder(spec, Path(out_dir)).build()
    logger.info(f"Wrote {payload['measurements']} measurements to {out_dir}")
    return payload
