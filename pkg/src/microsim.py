"""Spatial microsimulation: IPF-weighted survey populations and travel profiles."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .errors import (
    InconsistentMarginalsError,
    UnfittableCategoryError,
    UnknownRegionError,
    ValidationError,
)
from .ingest import read_csv_checked
from .schema import DAY_KINDS, TRAFFIC_MODES
from .transport import PROFILE_HOUR_COLUMNS

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1000
MARGINAL_TOTAL_RTOL = 1e-9
NO_TRAVEL = -1

# region_id -> dimension -> category -> target count
MarginalConstraints = Dict[str, Dict[str, Dict[str, float]]]


@dataclass(frozen=True)
class SurveySeed:
    """
    Survey respondents with categorical attributes and travel diaries.

    attributes is indexed by respondent_id with one column per attribute
    dimension. diaries has shape (respondents, 3 day kinds, 24 hours) and
    holds an index into TRAFFIC_MODES, or NO_TRAVEL.
    """

    attributes: pd.DataFrame
    diaries: np.ndarray

    def __post_init__(self):
        if self.attributes.isna().any().any():
            raise ValidationError("Every respondent needs a complete attribute vector")
        if self.diaries.shape != (len(self.attributes), len(DAY_KINDS), 24):
            raise ValidationError(f"Diary array shape {self.diaries.shape} does not match the respondents")

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def dimensions(self) -> List[str]:
        return list(self.attributes.columns)

    @classmethod
    def from_frames(cls, attributes: pd.DataFrame, diary: pd.DataFrame) -> "SurveySeed":
        """
        Build a seed from the survey and diary tables.

        A respondent without entries for a day kind does not travel that day;
        a day kind that is present must list all 24 hours.

        Args:
            attributes: Columns respondent_id, attr_1 ... attr_k
            diary: Columns respondent_id, day_kind, hour, mode (blank or "none" = no travel)
        """
        attributes = attributes.astype({"respondent_id": str}).set_index("respondent_id").sort_index()
        attributes = attributes.astype(str)
        if attributes.index.duplicated().any():
            raise ValidationError("Duplicate respondent ids in survey")
        position = {r: i for i, r in enumerate(attributes.index)}

        diary = diary.copy()
        diary["respondent_id"] = diary["respondent_id"].astype(str)
        unknown = sorted(set(diary["respondent_id"]) - set(position))
        if unknown:
            raise ValidationError(f"Diary entries for unknown respondents: {unknown[:10]}")
        bad_kinds = sorted(set(diary["day_kind"]) - set(DAY_KINDS))
        if bad_kinds:
            raise ValidationError(f"Unknown day kinds in diary: {bad_kinds}")
        if not diary["hour"].between(0, 23).all():
            raise ValidationError("Diary hours must be in 0..23")
        modes = diary["mode"].fillna("none").astype(str)
        travelling = ~modes.str.lower().isin(["none", ""])
        bad_modes = sorted(set(modes[travelling]) - set(TRAFFIC_MODES))
        if bad_modes:
            raise ValidationError(f"Unknown diary modes: {bad_modes}")

        hours_per_day = diary.groupby(["respondent_id", "day_kind"])["hour"].nunique()
        partial = hours_per_day[hours_per_day != 24]
        if len(partial):
            raise ValidationError(f"Diaries must cover 24 hours: {list(partial.index)[:10]}")

        diaries = np.full((len(attributes), len(DAY_KINDS), 24), NO_TRAVEL, dtype=np.int64)
        mode_index = {m: i for i, m in enumerate(TRAFFIC_MODES)}
        r = diary["respondent_id"].map(position).to_numpy()
        k = diary["day_kind"].map({d: i for i, d in enumerate(DAY_KINDS)}).to_numpy()
        h = diary["hour"].to_numpy(dtype=np.int64)
        m = np.where(travelling, modes.map(mode_index).fillna(NO_TRAVEL), NO_TRAVEL).astype(np.int64)
        diaries[r, k, h] = m
        return cls(attributes=attributes, diaries=diaries)


@dataclass
class IpfFit:
    """Fitted weights for one region plus convergence diagnostics."""

    region_id: str
    weights: np.ndarray
    converged: bool
    iterations: int
    max_error_history: List[float] = field(default_factory=list)
    pearson: Optional[float] = None

    @property
    def max_error(self) -> float:
        return self.max_error_history[-1] if self.max_error_history else float("nan")


def read_survey(attributes_path: Path, diary_path: Path) -> SurveySeed:
    """Load the survey attribute table and the diary table."""
    attributes = read_csv_checked(attributes_path, ["respondent_id"], dtype=str)
    diary = read_csv_checked(
        diary_path,
        ["respondent_id", "day_kind", "hour", "mode"],
        dtype={"respondent_id": str, "day_kind": str, "mode": str},
        keep_default_na=False,
    )
    return SurveySeed.from_frames(attributes, diary)


def read_marginals(path: Path) -> MarginalConstraints:
    """Load census marginals (region_id, dimension, category, target_count)."""
    frame = read_csv_checked(
        path,
        ["region_id", "dimension", "category", "target_count"],
        dtype={"region_id": str, "dimension": str, "category": str},
    )
    if (frame["target_count"] < 0).any():
        raise ValidationError("Marginal target counts must be nonnegative")
    constraints: MarginalConstraints = {}
    for rec in frame.itertuples(index=False):
        dims = constraints.setdefault(rec.region_id, {})
        dims.setdefault(rec.dimension, {})[rec.category] = float(rec.target_count)
    return constraints


def check_marginals(region_id: str, targets: Mapping[str, Mapping[str, float]]) -> float:
    """
    Check that every dimension of a region sums to the same total.

    Returns:
        The common total

    Raises:
        InconsistentMarginalsError: If the totals differ
    """
    totals = {dim: float(sum(cats.values())) for dim, cats in targets.items()}
    if not totals:
        raise ValidationError(f"Region {region_id!r} has no marginal constraints")
    reference = next(iter(totals.values()))
    for dim, total in totals.items():
        if abs(total - reference) > MARGINAL_TOTAL_RTOL * max(abs(reference), 1.0):
            raise InconsistentMarginalsError(
                f"Region {region_id!r}: dimension {dim!r} totals {total:g}, expected {reference:g}"
            )
    return reference


def _encode(seed: SurveySeed, targets: Mapping[str, Mapping[str, float]]) -> List[Tuple[np.ndarray, np.ndarray]]:
    encoded = []
    for dim, cats in targets.items():
        if dim not in seed.attributes.columns:
            raise ValidationError(f"Constraint dimension {dim!r} is not a survey attribute")
        categories = list(cats)
        codes = pd.Categorical(seed.attributes[dim], categories=categories).codes.astype(np.int64)
        target = np.array([cats[c] for c in categories], dtype=np.float64)
        encoded.append((codes, target))
    return encoded


def _marginals(weights: np.ndarray, codes: np.ndarray, size: int) -> np.ndarray:
    inside = codes >= 0
    return np.bincount(codes[inside], weights=weights[inside], minlength=size)


def _max_relative_error(weights: np.ndarray, encoded: Sequence[Tuple[np.ndarray, np.ndarray]]) -> float:
    worst = 0.0
    for codes, target in encoded:
        current = _marginals(weights, codes, target.shape[0])
        err = np.abs(current - target) / np.maximum(target, 1e-12)
        err[(target == 0) & (current == 0)] = 0.0
        worst = max(worst, float(err.max()))
    return worst


def fit_region(
    seed: SurveySeed,
    region_id: str,
    targets: Mapping[str, Mapping[str, float]],
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> IpfFit:
    """
    Iterative proportional fitting of seed weights to one region's marginals.

    Weights start at 1.0. Each sweep rescales the weights dimension by
    dimension so the weighted category totals equal the targets. Fitting
    stops once the maximum relative marginal error after a sweep is below
    tol, or after max_iters sweeps.

    Args:
        seed: Survey seed
        region_id: Region being fitted
        targets: dimension -> category -> target count
        max_iters: Maximum number of full sweeps
        tol: Maximum relative marginal error accepted

    Returns:
        IpfFit with weights and diagnostics

    Raises:
        UnfittableCategoryError: If a positive target has no seed respondent
        InconsistentMarginalsError: If dimension totals differ
    """
    check_marginals(region_id, targets)
    encoded = _encode(seed, targets)

    unfittable = []
    for (dim, cats), (codes, target) in zip(targets.items(), encoded):
        support = np.bincount(codes[codes >= 0], minlength=target.shape[0])
        unfittable += [f"{dim}={c}" for c, s, t in zip(cats, support, target) if s == 0 and t > 0]
    if unfittable:
        raise UnfittableCategoryError(f"Region {region_id!r}: no seed respondents for {', '.join(unfittable)}")

    weights = np.ones(len(seed), dtype=np.float64)
    for codes, _ in encoded:
        weights[codes < 0] = 0.0

    history: List[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        for codes, target in encoded:
            current = _marginals(weights, codes, target.shape[0])
            factor = np.divide(target, current, out=np.zeros_like(target), where=current > 0)
            weights = weights * factor[codes]
        history.append(_max_relative_error(weights, encoded))
        if history[-1] < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"IPF for region {region_id} stopped after {iterations} sweeps, max error {history[-1]:.3g}")

    fitted = np.concatenate([_marginals(weights, codes, t.shape[0]) for codes, t in encoded])
    wanted = np.concatenate([t for _, t in encoded])
    pearson = None
    if fitted.std() > 0 and wanted.std() > 0:
        pearson = float(np.corrcoef(fitted, wanted)[0, 1])

    return IpfFit(
        region_id=region_id,
        weights=weights,
        converged=converged,
        iterations=iterations,
        max_error_history=history,
        pearson=pearson,
    )


def ipf_fit(
    seed: SurveySeed,
    constraints: MarginalConstraints,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
    progress: bool = True,
) -> Dict[str, IpfFit]:
    """
    Fit every region of a constraint set.

    Regions are independent and are fitted in parallel when workers > 1.

    Args:
        seed: Survey seed shared by all regions
        constraints: region_id -> dimension -> category -> target
        max_iters: Maximum sweeps per region
        tol: Convergence tolerance on relative marginal error
        workers: Number of joblib worker processes
        progress: Show a progress bar

    Returns:
        Mapping region_id -> IpfFit
    """
    regions = sorted(constraints)
    pending = Parallel(n_jobs=workers, return_as="generator")(
        delayed(fit_region)(seed, region_id, constraints[region_id], max_iters, tol) for region_id in regions
    )
    fits = list(tqdm(pending, total=len(regions), desc="Fitting regions", unit="region", disable=not progress))
    for fit in fits:
        logger.debug(
            f"Region {fit.region_id}: {fit.iterations} sweeps, max error {fit.max_error:.3g}, pearson {fit.pearson}"
        )
    return {fit.region_id: fit for fit in fits}


def travel_profile_from_weights(
    seed: SurveySeed,
    weights: Mapping[str, IpfFit],
    region_id: str,
    day_kind: str,
) -> Tuple[np.ndarray, List[str]]:
    """
    Weighted hourly travel profile per mode for one region and day kind.

    Args:
        seed: Survey seed the weights were fitted on
        weights: Fitted weights by region
        region_id: Region of interest
        day_kind: Weekday, Saturday or Sunday

    Returns:
        Tuple of ((5 modes, 24 hours) array, modes with no travel at all).
        Rows of travelled modes sum to 1; rows of flagged modes are zero.

    Raises:
        UnknownRegionError: If the region has no fitted weights
    """
    if region_id not in weights:
        raise UnknownRegionError(f"No fitted weights for region {region_id!r}")
    if day_kind not in DAY_KINDS:
        raise ValidationError(f"Unknown day kind {day_kind!r}")
    w = weights[region_id].weights
    day = seed.diaries[:, DAY_KINDS.index(day_kind), :]

    profile = np.zeros((len(TRAFFIC_MODES), 24), dtype=np.float64)
    for m in range(len(TRAFFIC_MODES)):
        profile[m] = (w[:, None] * (day == m)).sum(axis=0)

    totals = profile.sum(axis=1)
    zero_modes = [TRAFFIC_MODES[m] for m in np.flatnonzero(totals <= 0)]
    travelled = totals > 0
    profile[travelled] /= totals[travelled, None]
    return profile, zero_modes


def build_travel_profiles(seed: SurveySeed, weights: Mapping[str, IpfFit]) -> Tuple[pd.DataFrame, List[str]]:
    """
    Export fitted profiles in the travel-profiles input schema.

    Modes nobody travels by get a uniform 1/24 profile and are flagged.

    Returns:
        Tuple of (frame with region_id, day_kind, mode, h00..h23; flagged
        "region/day_kind/mode" labels)
    """
    records = []
    flagged = []
    for region_id in sorted(weights):
        for day_kind in DAY_KINDS:
            profile, zero_modes = travel_profile_from_weights(seed, weights, region_id, day_kind)
            for m, mode in enumerate(TRAFFIC_MODES):
                vector = profile[m]
                if mode in zero_modes:
                    vector = np.full(24, 1.0 / 24.0)
                    flagged.append(f"{region_id}/{day_kind}/{mode}")
                records.append([region_id, day_kind, mode] + vector.tolist())
    if flagged:
        logger.warning(f"{len(flagged)} region/day/mode profiles had no travel and were set uniform")
    frame = pd.DataFrame(records, columns=["region_id", "day_kind", "mode"] + PROFILE_HOUR_COLUMNS)
    return frame, flagged
