"""Experiment protocols: temporal splits, random search, final refit, LOOV and subsets."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .errors import (
    EmptySplitError,
    LeakageError,
    TrialFailedError,
    UndefinedMetricError,
    ValidationError,
)
from .feature_store import FeatureStore
from .gbdt import Ensemble, TrainConfig, fit
from .grid import StationSite
from .metrics import log_mse, r_squared, summarise_scores
from .schema import FAMILY_PRESETS, FEATURE_NAMES, columns_for_families, resolve_families, schema_hash

logger = logging.getLogger(__name__)

WIDE_NUM_LEAVES = (1000, 4095)
STOPPING_FRACTION = 0.1
KEY_COLUMNS = ["station_id", "cell_id", "timestamp", "value", "environment_class"]

Range = Union[Tuple[float, float], List[float]]


@dataclass
class StationRows:
    """Target rows at station cells with their aligned feature matrix."""

    keys: pd.DataFrame
    features: np.ndarray
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.features.shape != (len(self.keys), len(self.feature_names)):
            raise ValidationError(
                f"Feature matrix shape {self.features.shape} does not match "
                f"{len(self.keys)} rows x {len(self.feature_names)} features"
            )

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def targets(self) -> np.ndarray:
        return self.keys["value"].to_numpy(dtype=np.float64)

    @property
    def station_ids(self) -> List[str]:
        return sorted(self.keys["station_id"].unique())

    def take(self, mask: np.ndarray) -> "StationRows":
        mask = np.asarray(mask)
        return StationRows(self.keys.loc[mask].reset_index(drop=True), self.features[mask], self.feature_names)

    def restrict(self, names: Sequence[str]) -> "StationRows":
        """Keep only the named columns, in their existing order."""
        wanted = set(names)
        positions = [i for i, n in enumerate(self.feature_names) if n in wanted]
        return StationRows(
            self.keys,
            self.features[:, positions],
            tuple(self.feature_names[i] for i in positions),
        )

    def row_keys(self) -> set:
        return set(zip(self.keys["station_id"], self.keys["timestamp"]))


def build_station_rows(
    store: FeatureStore,
    sites: Sequence[StationSite],
    measurements: pd.DataFrame,
    pollutant: str,
) -> StationRows:
    """
    Join one pollutant's measurements to feature rows at the stations' cells.

    Args:
        store: Feature store
        sites: Snapped stations
        measurements: Cleaned measurement frame
        pollutant: Pollutant to keep

    Returns:
        StationRows ordered by station_id then timestamp
    """
    by_id = {s.station_id: s for s in sites}
    data = measurements[measurements["pollutant"] == pollutant]
    unknown = sorted(set(data["station_id"]) - set(by_id))
    if unknown:
        logger.warning(f"Dropping {pollutant} measurements of stations not in the station list: {unknown[:10]}")
        data = data[data["station_id"].isin(list(by_id))]
    if data.duplicated(["station_id", "timestamp"]).any():
        raise ValidationError(f"Duplicate {pollutant} measurements for a station and hour")

    keys = data.sort_values(["station_id", "timestamp"], kind="mergesort").reset_index(drop=True)
    keys = pd.DataFrame(
        {
            "station_id": keys["station_id"].astype(str),
            "cell_id": keys["station_id"].map(lambda s: by_id[s].snapped_cell).astype(np.int64),
            "timestamp": keys["timestamp"],
            "value": keys["value"].astype(np.float64),
            "environment_class": keys["station_id"].map(lambda s: by_id[s].environment_class),
        },
        columns=KEY_COLUMNS,
    )
    if keys.empty:
        features = np.empty((0, len(FEATURE_NAMES)))
    else:
        features = store.rows(keys["cell_id"].to_numpy(), pd.DatetimeIndex(keys["timestamp"]))
    logger.info(f"{pollutant}: {len(keys)} station rows from {keys['station_id'].nunique()} stations")
    return StationRows(keys, features)


@dataclass(frozen=True)
class SplitSpec:
    """Calendar years assigned to training, validation and test."""

    train_years: Tuple[int, ...] = (2014, 2015, 2016)
    validation_years: Tuple[int, ...] = (2017,)
    test_years: Tuple[int, ...] = (2018,)

    def __post_init__(self):
        sets = [set(self.train_years), set(self.validation_years), set(self.test_years)]
        if not all(sets):
            raise ValidationError("Every split needs at least one year")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValidationError("Split years must be pairwise disjoint")


def temporal_split(rows: StationRows, spec: SplitSpec) -> Tuple[StationRows, StationRows, StationRows]:
    """
    Partition rows by calendar year.

    Raises:
        EmptySplitError: If any of the three parts is empty
    """
    years = pd.DatetimeIndex(rows.keys["timestamp"]).year
    parts = [rows.take(np.asarray(years.isin(list(y)))) for y in (spec.train_years, spec.validation_years, spec.test_years)]
    empty = [name for name, part in zip(("train", "validation", "test"), parts) if len(part) == 0]
    if empty:
        raise EmptySplitError(f"Temporal split leaves {', '.join(empty)} empty")
    outside = len(rows) - sum(len(p) for p in parts)
    if outside:
        logger.info(f"{outside} rows fall outside the split years and are unused")
    return parts[0], parts[1], parts[2]


@dataclass(frozen=True)
class SearchSpace:
    """
    Hyperparameter ranges.

    A tuple (lo, hi) is a range: integers are drawn uniformly, floats
    log-uniformly (uniformly when lo is 0). A list is a set of candidates.
    """

    num_leaves: Range = WIDE_NUM_LEAVES
    min_data_in_leaf: Range = (20, 200)
    l2_lambda: Range = (1e-3, 10.0)
    learning_rate: Range = (0.02, 0.3)

    def __post_init__(self):
        for name in ("num_leaves", "min_data_in_leaf", "l2_lambda", "learning_rate"):
            value = getattr(self, name)
            if isinstance(value, list):
                if not value:
                    raise ValidationError(f"Search candidates for {name} are empty")
            elif len(value) != 2 or value[0] > value[1]:
                raise ValidationError(f"Search range for {name} must be (lo, hi) with lo <= hi")

    def sample(self, rng: np.random.Generator, base: TrainConfig, seed: int) -> TrainConfig:
        values = {}
        for name, integer in (("num_leaves", True), ("min_data_in_leaf", True), ("l2_lambda", False), ("learning_rate", False)):
            spec = getattr(self, name)
            if isinstance(spec, list):
                values[name] = spec[int(rng.integers(len(spec)))]
            elif integer:
                values[name] = int(rng.integers(int(spec[0]), int(spec[1]) + 1))
            elif spec[0] > 0:
                values[name] = float(math.exp(rng.uniform(math.log(spec[0]), math.log(spec[1]))))
            else:
                values[name] = float(rng.uniform(spec[0], spec[1]))
        return base.with_overrides(seed=seed, **values)


@dataclass
class Trial:
    """One random-search configuration and its scores."""

    index: int
    config: TrainConfig
    valid_mse: Optional[float] = None
    train_mse: Optional[float] = None
    train_r2: Optional[float] = None
    valid_r2: Optional[float] = None
    best_iteration: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_record(self) -> Dict[str, object]:
        record = {"trial": self.index}
        record.update(asdict(self.config))
        record.update(
            {
                "train_r2": self.train_r2,
                "valid_r2": self.valid_r2,
                "train_log_mse": self.train_mse,
                "valid_log_mse": self.valid_mse,
                "best_iteration": self.best_iteration,
                "error": self.error or "",
            }
        )
        return record


def _safe_r2(predictions: np.ndarray, actuals: np.ndarray) -> Optional[float]:
    try:
        return r_squared(predictions, actuals)
    except UndefinedMetricError:
        return None


def _run_trial(index: int, config: TrainConfig, train: StationRows, valid: StationRows) -> Trial:
    trial = Trial(index=index, config=config)
    try:
        model = fit(train.features, train.targets, valid.features, valid.targets, config, train.feature_names)
        train_pred = model.predict(train.features)
        valid_pred = model.predict(valid.features)
        trial.train_mse = log_mse(train_pred, train.targets)
        trial.valid_mse = log_mse(valid_pred, valid.targets)
        trial.train_r2 = _safe_r2(train_pred, train.targets)
        trial.valid_r2 = _safe_r2(valid_pred, valid.targets)
        trial.best_iteration = model.best_iteration
    except Exception as e:
        trial.error = f"{type(e).__name__}: {e}"
    return trial


def random_search(
    space: SearchSpace,
    train: StationRows,
    valid: StationRows,
    n_configs: int = 40,
    seed: int = 0,
    base_config: Optional[TrainConfig] = None,
    workers: int = 1,
    progress: bool = True,
) -> Tuple[Trial, List[Trial]]:
    """
    Sample configurations, fit each on train and score it on valid.

    Configurations and their seeds are drawn in trial order from one
    generator seeded with `seed`. The best trial has the lowest validation
    MSE in log space; ties go to the earlier trial.

    Returns:
        Tuple of (best trial, all trials in index order)

    Raises:
        TrialFailedError: If every trial failed
    """
    if n_configs < 1:
        raise ValidationError("n_configs must be at least 1")
    base_config = base_config or TrainConfig()
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(n_configs):
        trial_seed = int(rng.integers(0, 2**31 - 1))
        configs.append(space.sample(rng, base_config, trial_seed))

    pending = Parallel(n_jobs=workers, return_as="generator")(
        delayed(_run_trial)(i, config, train, valid) for i, config in enumerate(configs)
    )
    trials: List[Trial] = list(
        tqdm(pending, total=len(configs), desc="Random search", unit="trial", disable=not progress)
    )
    failed = [t for t in trials if not t.ok]
    for t in failed:
        logger.warning(f"Trial {t.index} failed: {t.error}")
    finished = [t for t in trials if t.ok]
    if not finished:
        raise TrialFailedError(f"All {n_configs} random-search trials failed")
    best = min(finished, key=lambda t: (t.valid_mse, t.index))
    logger.info(
        f"Best of {len(finished)} trials: #{best.index} valid log-MSE {best.valid_mse:.5f} "
        f"({len(failed)} failed)"
    )
    return best, trials


@dataclass
class FinalFit:
    """Refit model and its test scores."""

    ensemble: Ensemble
    test_r2: Optional[float]
    test_mse: float
    fit_rows: int
    stopping_rows: int


def assert_no_leakage(training: StationRows, evaluation: Sequence[StationRows]) -> None:
    """Raise LeakageError if any (station, timestamp) key is shared."""
    seen = training.row_keys()
    for part in evaluation:
        overlap = seen & part.row_keys()
        if overlap:
            raise LeakageError(f"{len(overlap)} evaluation rows also appear in training")


def final_fit(config: TrainConfig, train: StationRows, valid: StationRows, test: StationRows) -> FinalFit:
    """
    Refit on train and validation rows, then score the test rows.

    The chronologically last 10% of the combined rows are held out as the
    early-stopping set.

    Raises:
        EmptySplitError: If the test set is empty
    """
    if len(test) == 0:
        raise EmptySplitError("Test set is empty")
    combined_keys = pd.concat([train.keys, valid.keys], ignore_index=True)
    combined = StationRows(combined_keys, np.vstack([train.features, valid.features]), train.feature_names)
    order = np.lexsort((combined.keys["station_id"].to_numpy(), combined.keys["timestamp"].to_numpy()))
    n_stop = max(1, math.ceil(STOPPING_FRACTION * len(combined)))
    if len(combined) - n_stop < 1:
        raise EmptySplitError("Too few rows to hold out an early-stopping set")
    fit_mask = np.zeros(len(combined), dtype=bool)
    fit_mask[order[: len(combined) - n_stop]] = True
    fit_part = combined.take(fit_mask)
    stop_part = combined.take(~fit_mask)
    assert_no_leakage(fit_part, [stop_part, test])

    model = fit(fit_part.features, fit_part.targets, stop_part.features, stop_part.targets, config, combined.feature_names)
    predictions = model.predict(test.features)
    test_r2 = _safe_r2(predictions, test.targets)
    if test_r2 is None:
        logger.warning("Test R2 is undefined (fewer than 2 rows or constant targets)")
    return FinalFit(
        ensemble=model,
        test_r2=test_r2,
        test_mse=log_mse(predictions, test.targets),
        fit_rows=len(fit_part),
        stopping_rows=len(stop_part),
    )


@dataclass
class LoovResult:
    """Per-station leave-one-out scores and their summaries."""

    per_station: pd.DataFrame
    summary: Dict[str, Optional[float]]
    class_summary: pd.DataFrame


@dataclass
class ExperimentReport:
    """Scores and choices of one pollutant/subset experiment."""

    pollutant: str
    subset: str
    families: Tuple[str, ...]
    n_features: int
    schema_hash: str
    best_config: TrainConfig
    trials: List[Trial]
    train_r2: Optional[float]
    valid_r2: Optional[float]
    train_mse: Optional[float]
    valid_mse: Optional[float]
    test_r2: Optional[float]
    test_mse: Optional[float]
    loov: Optional[LoovResult] = None
    ensemble: Optional[Ensemble] = field(default=None, repr=False)

    def scores_record(self) -> Dict[str, object]:
        record = {
            "pollutant": self.pollutant,
            "subset": self.subset,
            "families": "+".join(self.families),
            "n_features": self.n_features,
            "schema_hash": self.schema_hash,
            "train_r2": self.train_r2,
            "valid_r2": self.valid_r2,
            "test_r2": self.test_r2,
            "train_log_mse": self.train_mse,
            "valid_log_mse": self.valid_mse,
            "test_log_mse": self.test_mse,
        }
        if self.loov is not None:
            for key in ("max", "min", "mean", "median"):
                record[f"loov_{key}"] = self.loov.summary[key]
        return record


@dataclass(frozen=True)
class Protocol:
    """Everything a temporal-split experiment needs besides the rows."""

    split: SplitSpec = field(default_factory=SplitSpec)
    space: SearchSpace = field(default_factory=SearchSpace)
    n_configs: int = 40
    seed: int = 0
    base_config: TrainConfig = field(default_factory=TrainConfig)
    workers: int = 1
    progress: bool = True


def run_protocol(rows: StationRows, protocol: Protocol) -> Tuple[Trial, List[Trial], FinalFit]:
    """Split, search and refit."""
    train, valid, test = temporal_split(rows, protocol.split)
    assert_no_leakage(train, [valid, test])
    best, trials = random_search(
        protocol.space,
        train,
        valid,
        protocol.n_configs,
        protocol.seed,
        protocol.base_config,
        protocol.workers,
        protocol.progress,
    )
    final = final_fit(best.config, train, valid, test)
    logger.info(f"Test R2 {final.test_r2}, test log-MSE {final.test_mse:.5f}")
    return best, trials, final


def loov_folds(station_ids: Sequence[str], k: int = 5) -> List[List[str]]:
    """Round-robin fold assignment over sorted station ids."""
    ordered = sorted(set(station_ids))
    if len(ordered) < k:
        raise ValidationError(f"LOOV needs at least {k} stations, got {len(ordered)}")
    return [ordered[i::k] for i in range(k)]


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def loov_experiment(
    rows: StationRows,
    protocol: Protocol,
    k: int = 5,
    reuse_config: Optional[TrainConfig] = None,
) -> LoovResult:
    """
    Spatial leave-one-out validation over k station folds.

    For each fold the full temporal protocol runs on the other stations'
    rows; every held-out station's complete series is then scored with R2.
    With reuse_config set, the search is skipped and that configuration is
    refit per fold.

    Returns:
        LoovResult; stations with an undefined R2 are reported as skipped
    """
    folds = loov_folds(rows.station_ids, k)
    classes = rows.keys.drop_duplicates("station_id").set_index("station_id")["environment_class"]
    records = []
    for f, held_out in enumerate(tqdm(folds, desc="LOOV folds", unit="fold", disable=not protocol.progress)):
        held_mask = rows.keys["station_id"].isin(held_out).to_numpy()
        retained = rows.take(~held_mask)
        fold_protocol = Protocol(
            split=protocol.split,
            space=protocol.space,
            n_configs=protocol.n_configs,
            seed=_fold_seed(protocol.seed, f),
            base_config=protocol.base_config,
            workers=protocol.workers,
            progress=False,
        )
        if reuse_config is None:
            _, _, final = run_protocol(retained, fold_protocol)
        else:
            train, valid, test = temporal_split(retained, protocol.split)
            final = final_fit(reuse_config, train, valid, test)

        for station_id in held_out:
            station = rows.take((rows.keys["station_id"] == station_id).to_numpy())
            assert_no_leakage(retained, [station])
            record = {
                "station_id": station_id,
                "environment_class": classes.get(station_id, ""),
                "fold": f,
                "n_obs": len(station),
                "r2": None,
                "status": "scored",
            }
            if len(station) < 2:
                record["status"] = "skipped"
            else:
                record["r2"] = _safe_r2(final.ensemble.predict(station.features), station.targets)
                if record["r2"] is None:
                    record["status"] = "skipped"
            if record["status"] == "skipped":
                logger.warning(f"LOOV station {station_id}: R2 undefined, skipped")
            records.append(record)

    per_station = pd.DataFrame(records).sort_values("station_id", kind="mergesort").reset_index(drop=True)
    summary = summarise_scores(per_station["r2"].tolist())
    class_rows = []
    for env_class, group in per_station.groupby("environment_class", sort=True):
        stats = summarise_scores(group["r2"].tolist())
        stats["environment_class"] = env_class
        class_rows.append(stats)
    class_summary = pd.DataFrame(class_rows, columns=["environment_class", "max", "min", "mean", "median", "count"])
    logger.info(f"LOOV median R2 {summary['median']} over {summary['count']} stations")
    return LoovResult(per_station=per_station, summary=summary, class_summary=class_summary)


def subset_label(selection: Sequence[str]) -> str:
    """Preset name when the selection is exactly one preset, else the joined family labels."""
    labels = [s.strip() for s in selection if s.strip()]
    if len(labels) == 1 and labels[0] in FAMILY_PRESETS:
        return labels[0]
    return "+".join(resolve_families(labels))


def subset_experiment(
    selection: Sequence[str],
    rows: StationRows,
    protocol: Protocol,
    pollutant: str = "",
    with_loov: bool = True,
    loov_k: int = 5,
    reuse_search_in_loov: bool = False,
) -> ExperimentReport:
    """
    Full protocol on the columns of the selected dataset families.

    Args:
        selection: Family labels and/or presets (All, Global, Forecasting)
        rows: Station rows with the full feature matrix
        protocol: Split, search space and seed
        pollutant: Label carried into the report
        with_loov: Also run spatial leave-one-out validation
        loov_k: Number of LOOV folds
        reuse_search_in_loov: Reuse the all-station winner in every fold

    Returns:
        ExperimentReport
    """
    families = resolve_families(selection)
    label = subset_label(selection)
    restricted = rows.restrict(columns_for_families(families))
    logger.info(f"Subset {label}: families {', '.join(families)} ({len(restricted.feature_names)} columns)")

    best, trials, final = run_protocol(restricted, protocol)
    loov = None
    if with_loov:
        loov = loov_experiment(restricted, protocol, loov_k, best.config if reuse_search_in_loov else None)

    return ExperimentReport(
        pollutant=pollutant,
        subset=label,
        families=families,
        n_features=len(restricted.feature_names),
        schema_hash=schema_hash(restricted.feature_names),
        best_config=best.config,
        trials=trials,
        train_r2=best.train_r2,
        valid_r2=best.valid_r2,
        train_mse=best.train_mse,
        valid_mse=best.valid_mse,
        test_r2=final.test_r2,
        test_mse=final.test_mse,
        loov=loov,
        ensemble=final.ensemble,
    )
