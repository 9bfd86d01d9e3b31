"""Command-line interface for synthetic monitoring station experiments and maps."""

import functools
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import click
import pandas as pd

from .config import Settings, load_settings, parse_names, parse_thresholds, parse_years
from .errors import DataGapError, UndefinedMetricError, ValidationError
from .experiments import (
    ExperimentReport,
    StationRows,
    SplitSpec,
    build_station_rows,
    subset_experiment,
    temporal_split,
)
from .feature_store import INPUT_FILES, load_feature_store
from .features import (
    build_dendrogram,
    cluster_importance,
    clusterable_features,
    correlation_report,
    feature_dissimilarity,
    hierarchical_cluster,
)
from .gbdt import Ensemble
from .grid import abstraction_summary, load_study_area, snap_stations
from .ingest import (
    clean_measurements,
    format_timestamps,
    majority_land_use,
    parse_timestamps,
    read_csv_checked,
    read_land_use,
    read_measurements,
    read_stations,
)
from .metrics import (
    exceedance_ladder,
    exceedance_share,
    grayscale_levels,
    mean_peak_distance,
    peak_distance,
    summarise_scores,
)
from .microsim import build_travel_profiles, ipf_fit, read_marginals, read_survey
from .predict import fill_gaps, grid_predict, hourly_span
from .remote_sensing import monthly_composite, read_remote_sensing
from .synthetic_world import SURVEY_FILES, SyntheticWorldSpec, generate_world
from .writer import Writer

# Configure logging to stderr to keep tqdm bars and CSV output streams clean
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stderr)],
)
logger = logging.getLogger(__name__)

EXIT_INTERRUPTED = 1
EXIT_VALIDATION = 2
EXIT_DATA_GAP = 3
EXIT_INTERNAL = 4

DEFAULT_CLUSTER_THRESHOLD = 0.5


def run_guarded(action: Callable[[], None]) -> None:
    """Run a command body and map failures to exit codes."""
    try:
        action()
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        sys.exit(EXIT_INTERRUPTED)
    except ValidationError as e:
        logger.error(f"Validation error: {e}")
        sys.exit(EXIT_VALIDATION)
    except DataGapError as e:
        logger.error(f"Data gap: {e}")
        sys.exit(EXIT_DATA_GAP)
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        sys.exit(EXIT_INTERNAL)


def log_summary(title: str, lines: Sequence[str]) -> None:
    logger.info("=" * 60)
    logger.info(title)
    for line in lines:
        logger.info(line)
    logger.info("=" * 60)


def common_options(command: Callable) -> Callable:
    """Attach --recipe, --seed, --workers, --out-dir and --verbose to a command."""

    @click.option("--recipe", type=click.Path(dir_okay=False), default=None, help="Experiment recipe file")
    @click.option("--seed", type=int, default=None, help="Seed for every stochastic step")
    @click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker processes (default: all cores)")
    @click.option("--out-dir", default=None, help="Output directory (default: out)")
    @click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
    @functools.wraps(command)
    def wrapper(recipe, seed, workers, out_dir, verbose, **kwargs):
        if verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return command(
            settings_args={"recipe": recipe, "seed": seed, "workers": workers, "out_dir": out_dir},
            **kwargs,
        )

    return wrapper


def settings_from(settings_args: Dict[str, object]) -> Settings:
    recipe = settings_args["recipe"]
    overrides = {k: v for k, v in settings_args.items() if k != "recipe"}
    return load_settings(Path(recipe) if recipe else None, overrides=overrides)


def _years_option(ctx, param, value):
    try:
        return parse_years(value)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


def _names_option(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_names(value)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


def _thresholds_option(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_thresholds(value)
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers ({e})") from e


def _timestamp_option(ctx, param, value):
    if value is None:
        return None
    try:
        return pd.Timestamp(parse_timestamps(pd.Series([value])).iloc[0])
    except ValidationError as e:
        raise click.BadParameter(str(e)) from e


def load_inputs(settings: Settings):
    """Feature store, snapped stations and cleaned measurements of the input directory."""
    input_dir = Path(settings.input_dir)
    store = load_feature_store(input_dir)
    stations = read_stations(input_dir / INPUT_FILES["stations"])
    sites = snap_stations(stations, store.area)
    measurements, removed = clean_measurements(read_measurements(input_dir / INPUT_FILES["measurements"]))
    return store, sites, measurements, removed


def model_file_name(pollutant: str, subset: str) -> str:
    return f"model_{pollutant}_{subset.replace('+', '-')}.txt"


def peak_reports(report: ExperimentReport, rows: StationRows, split: SplitSpec) -> pd.DataFrame:
    """Peak distance of the refit model at every test station."""
    restricted = rows.restrict(report.ensemble.feature_names)
    _, _, test = temporal_split(restricted, split)
    predicted = report.ensemble.predict(test.features)
    stamps = pd.DatetimeIndex(test.keys["timestamp"])
    peaks = []
    for station_id in test.station_ids:
        mask = (test.keys["station_id"] == station_id).to_numpy()
        try:
            peaks.append(
                peak_distance(
                    pd.Series(test.targets[mask], index=stamps[mask]),
                    pd.Series(predicted[mask], index=stamps[mask]),
                    station_id,
                    report.pollutant,
                )
            )
        except UndefinedMetricError as e:
            logger.warning(f"Peak distance for {station_id} undefined: {e}")
    frame = pd.DataFrame([asdict(p) for p in peaks])
    if peaks:
        frame["peak_timestamp"] = format_timestamps(frame["peak_timestamp"])
        frame.insert(1, "subset", report.subset)
        logger.info(f"{report.pollutant}/{report.subset}: mean peak distance {mean_peak_distance(peaks):.2f}%")
    return frame


def write_reports(
    writer: Writer,
    reports: List[Tuple[ExperimentReport, StationRows]],
    split: SplitSpec,
) -> None:
    """Write scores, trials, LOOV tables, peak distances, importances and models."""
    scores, trials, loov, loov_classes, peaks, importance = [], [], [], [], [], []
    for report, rows in reports:
        record = report.scores_record()
        for key in ("num_leaves", "min_data_in_leaf", "l2_lambda", "learning_rate"):
            record[f"best_{key}"] = getattr(report.best_config, key)
        record["best_iteration"] = report.ensemble.best_iteration
        scores.append(record)
        for trial in report.trials:
            trials.append({"pollutant": report.pollutant, "subset": report.subset, **trial.to_record()})
        if report.loov is not None:
            loov.append(report.loov.per_station.assign(pollutant=report.pollutant, subset=report.subset))
            loov_classes.append(report.loov.class_summary.assign(pollutant=report.pollutant, subset=report.subset))
        peaks.append(peak_reports(report, rows, split))
        counts = report.ensemble.feature_importance()
        importance.append(
            pd.DataFrame(
                {
                    "pollutant": report.pollutant,
                    "subset": report.subset,
                    "feature": list(counts),
                    "split_count": list(counts.values()),
                }
            )
        )
        writer.write_text(model_file_name(report.pollutant, report.subset), report.ensemble.to_text())

    writer.write_csv("scores.csv", pd.DataFrame(scores))
    writer.write_csv("trials.csv", pd.DataFrame(trials))
    writer.write_csv("peaks.csv", pd.concat(peaks, ignore_index=True))
    writer.write_csv("feature_importance.csv", pd.concat(importance, ignore_index=True))
    if loov:
        writer.write_csv("loov.csv", pd.concat(loov, ignore_index=True))
        writer.write_csv("loov_classes.csv", pd.concat(loov_classes, ignore_index=True))


def run_experiments(
    settings: Settings,
    selections: Sequence[Sequence[str]],
    with_loov: bool,
    progress: bool = True,
) -> List[ExperimentReport]:
    """Run one subset experiment per pollutant and selection; write everything to out_dir."""
    store, sites, measurements, _ = load_inputs(settings)
    protocol = settings.protocol(progress=progress)
    writer = Writer(settings.out_dir)
    results = []
    for pollutant in settings.pollutants:
        rows = build_station_rows(store, sites, measurements, pollutant)
        for selection in selections:
            report = subset_experiment(
                selection,
                rows,
                protocol,
                pollutant=pollutant,
                with_loov=with_loov,
                loov_k=settings.loov_folds,
                reuse_search_in_loov=settings.reuse_search_in_loov,
            )
            results.append((report, rows))
    write_reports(writer, results, protocol.split)
    writer.write_manifest(
        extra={
            "pollutants": list(settings.pollutants),
            "seed": settings.seed,
            "schema_hashes": {f"{r.pollutant}/{r.subset}": r.schema_hash for r, _ in results},
        }
    )

    lines = []
    for report, _ in results:
        line = (
            f"{report.pollutant}/{report.subset}: {report.n_features} features, "
            f"schema {report.schema_hash}, test R2 {report.test_r2}"
        )
        if report.loov is not None:
            line += f", LOOV median R2 {report.loov.summary['median']}"
        lines.append(line)
    lines.append(f"Files written: {writer.get_written_count()} in {settings.out_dir}")
    log_summary("Experiments completed!", lines)
    return [r for r, _ in results]


@click.group()
def cli():
    """Synthetic monitoring stations: estimate pollutant concentrations at every grid cell."""


@cli.command("generate-world")
@common_options
@click.option("--rows", default=20, type=click.IntRange(min=6), help="Grid rows (default: 20)")
@click.option("--cols", default=20, type=click.IntRange(min=6), help="Grid columns (default: 20)")
@click.option("--years", default="2014-2018", callback=_years_option, help="Years to simulate (default: 2014-2018)")
@click.option("--stations-per-class", default=2, type=click.IntRange(min=0), help="Stations per class (default: 2)")
@click.option("--noise-sigma", default=0.1, type=float, help="Log-space noise (default: 0.1)")
@click.option("--hour-step", default=1, type=click.IntRange(min=1), help="Keep every n-th hour (default: 1)")
@click.option("--negative-rate", default=0.0, type=float, help="Fraction of negative artefacts (default: 0)")
@click.option("--pollutants", default="NO2", callback=_names_option, help="Pollutants to simulate (default: NO2)")
@click.option("--no-adversarial", is_flag=True, help="Do not plant the adversarial station")
def generate_world_cmd(
    settings_args,
    rows: int,
    cols: int,
    years: Tuple[int, ...],
    stations_per_class: int,
    noise_sigma: float,
    hour_step: int,
    negative_rate: float,
    pollutants: Tuple[str, ...],
    no_adversarial: bool,
):
    """
    Write a synthetic world: every input file plus a manifest of its ground truth.

    Example:
        synthetic_stations generate-world --out-dir world --seed 7 --years 2016-2018
    """

    def action():
        settings = settings_from(settings_args)
        spec = SyntheticWorldSpec(
            rows=rows,
            cols=cols,
            years=years,
            stations_per_class=stations_per_class,
            noise_sigma=noise_sigma,
            seed=settings.seed,
            adversarial_station=not no_adversarial,
            negative_rate=negative_rate,
            hour_step=hour_step,
            pollutants=pollutants,
        )
        payload = generate_world(spec, Path(settings.out_dir))
        log_summary(
            "World generated!",
            [
                f"Grid: {rows}x{cols}, years {years[0]}-{years[-1]}",
                f"Stations: {payload['stations']} (adversarial: {payload['adversarial_station']})",
                f"Measurements: {payload['measurements']}",
                f"Output directory: {settings.out_dir}",
            ],
        )

    run_guarded(action)


@cli.command("build-profiles")
@common_options
def build_profiles_cmd(settings_args):
    """Fit survey weights to regional marginals and export travel profiles."""

    def action():
        settings = settings_from(settings_args)
        input_dir = Path(settings.input_dir)
        seed = read_survey(input_dir / SURVEY_FILES["attributes"], input_dir / SURVEY_FILES["diary"])
        constraints = read_marginals(input_dir / SURVEY_FILES["marginals"])
        fits = ipf_fit(seed, constraints, workers=settings.workers)
        profiles, flagged = build_travel_profiles(seed, fits)

        writer = Writer(settings.out_dir)
        writer.write_csv(INPUT_FILES["travel_profiles"], profiles)
        diagnostics = pd.DataFrame(
            [
                {
                    "region_id": f.region_id,
                    "converged": f.converged,
                    "iterations": f.iterations,
                    "max_error": f.max_error,
                    "pearson": f.pearson,
                }
                for f in fits.values()
            ]
        )
        writer.write_csv("ipf_diagnostics.csv", diagnostics)
        writer.write_manifest()
        log_summary(
            "Travel profiles built!",
            [
                f"Respondents: {len(seed)}, regions: {len(fits)}",
                f"Converged regions: {int(diagnostics['converged'].sum())}",
                f"Uniform fallbacks: {len(flagged)}",
            ],
        )

    run_guarded(action)


@cli.command("ingest-check")
@common_options
def ingest_check_cmd(settings_args):
    """Load every input family, clean targets and report data-quality figures."""

    def action():
        settings = settings_from(settings_args)
        input_dir = Path(settings.input_dir)
        store, sites, measurements, removed = load_inputs(settings)
        writer = Writer(settings.out_dir)

        snapped = pd.DataFrame([asdict(s) for s in sites])
        writer.write_csv("stations_snapped.csv", snapped)
        land_use = read_land_use(input_dir / INPUT_FILES["land_use"], store.area.cell_size)
        majority = majority_land_use(land_use).rename("majority_class").reset_index()
        writer.write_csv("majority_land_use.csv", majority)
        composite = monthly_composite(read_remote_sensing(input_dir / INPUT_FILES["remote_sensing"]), store.area)
        writer.write_csv("remote_sensing_missing.csv", composite.missing_counts.rename_axis("variable").reset_index())
        writer.write_csv(
            "removed_measurements.csv",
            pd.DataFrame({"pollutant": list(removed), "removed": list(removed.values())}),
        )

        lines = [f"Cells: {len(store.area)}, road years: {store.road_years}"]
        for pollutant in settings.pollutants:
            rows = build_station_rows(store, sites, measurements, pollutant)
            lines.append(f"{pollutant}: {len(rows)} rows x {rows.features.shape[1]} features")
        if sites:
            summary = abstraction_summary(sites)
            lines.append(
                f"Abstraction distance: max {summary['max_m']:.1f} m, mean {summary['mean_m']:.1f} m, "
                f"median {summary['median_m']:.1f} m (farthest {summary['farthest_station']})"
            )
            per_class = snapped["environment_class"].value_counts().sort_index()
            lines += [f"  {cls}: {count} stations" for cls, count in per_class.items()]
        lines.append(f"Negative measurements removed: {sum(removed.values())}")
        writer.write_manifest()
        log_summary("Ingest check completed!", lines)

    run_guarded(action)


@cli.command("features")
@common_options
@click.option("--threshold", default=DEFAULT_CLUSTER_THRESHOLD, type=float, help="Cluster cut height (default: 0.5)")
@click.option("--top", default=10, type=click.IntRange(min=1), help="Features listed per direction (default: 10)")
def features_cmd(settings_args, threshold: float, top: int):
    """Spearman correlation report and hierarchical clustering of the feature set."""

    def action():
        settings = settings_from(settings_args)
        store, sites, measurements, _ = load_inputs(settings)
        classes = {s.station_id: s.environment_class for s in sites}
        writer = Writer(settings.out_dir)
        lines = []
        for pollutant in settings.pollutants:
            rows = build_station_rows(store, sites, measurements, pollutant)
            frame = pd.DataFrame(rows.features, columns=list(rows.feature_names))
            report = correlation_report(frame, rows.targets, rows.keys["station_id"], classes)
            writer.write_csv(f"correlations_{pollutant}.csv", report.to_frame().reset_index())

            kept, excluded = clusterable_features(frame)
            dissimilarity, _ = feature_dissimilarity(frame[kept])
            clusters = hierarchical_cluster(dissimilarity, threshold)
            writer.write_csv(
                f"clusters_{pollutant}.csv",
                pd.DataFrame({"feature": list(clusters), "cluster": list(clusters.values())}),
            )
            writer.write_csv(f"dendrogram_{pollutant}.csv", build_dendrogram(dissimilarity).merges())

            positive, negative = report.top(top)
            lines.append(f"{pollutant}: {len(set(clusters.values()))} clusters at {threshold}, {len(excluded)} excluded")
            lines += [f"  + {name}: {rho:.3f}" for name, rho in positive.items()]
            lines += [f"  - {name}: {rho:.3f}" for name, rho in negative.items()]
        writer.write_manifest()
        log_summary("Feature analysis completed!", lines)

    run_guarded(action)


@cli.command("train")
@common_options
def train_cmd(settings_args):
    """Temporal-split experiment on the recipe's families, without LOOV."""

    def action():
        settings = settings_from(settings_args)
        run_experiments(settings, [settings.families], with_loov=False)

    run_guarded(action)


@cli.command("loov")
@common_options
def loov_cmd(settings_args):
    """Temporal-split experiment plus spatial leave-one-out validation."""

    def action():
        settings = settings_from(settings_args)
        run_experiments(settings, [settings.families], with_loov=True)

    run_guarded(action)


@cli.command("subset")
@common_options
@click.option(
    "--subsets",
    multiple=True,
    default=("All", "Global", "Forecasting"),
    help="Family selection, preset or labels joined by '+'; repeatable",
)
@click.option("--with-loov", is_flag=True, help="Also run LOOV for each subset")
def subset_cmd(settings_args, subsets: Tuple[str, ...], with_loov: bool):
    """Compare dataset-family subsets under the same protocol."""

    def action():
        settings = settings_from(settings_args)
        selections = [tuple(s.split("+")) for s in subsets]
        run_experiments(settings, selections, with_loov)

    run_guarded(action)


@cli.command("run")
@common_options
def run_cmd(settings_args):
    """Run a recipe end to end: ingest, features, search, refit, LOOV and reports."""

    def action():
        if not settings_args["recipe"]:
            raise ValidationError("run needs --recipe")
        settings = settings_from(settings_args)
        logger.info(f"Recipe families: {', '.join(settings.families)}")
        run_experiments(settings, [settings.families], True)

    run_guarded(action)


@cli.command("predict-grid")
@common_options
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False), help="Model file")
@click.option("--start", required=True, callback=_timestamp_option, help="First hour (ISO-8601)")
@click.option("--end", required=True, callback=_timestamp_option, help="End hour, exclusive (ISO-8601)")
@click.option("--pollutant", default=None, help="Label for the output (default: first recipe pollutant)")
@click.option("--pgm", is_flag=True, help="Also write one PGM raster per timestamp")
def predict_grid_cmd(settings_args, model_path: str, start, end, pollutant: Optional[str], pgm: bool):
    """Predict every cell at every hour of [start, end) as a synthetic station."""

    def action():
        settings = settings_from(settings_args)
        label = pollutant or settings.pollutants[0]
        ensemble = Ensemble.load(Path(model_path))
        store = load_feature_store(Path(settings.input_dir))
        prediction = grid_predict(
            ensemble,
            store,
            store.area.cell_ids,
            hourly_span(start, end),
            workers=settings.workers,
            batch_size=settings.predict_batch_size,
            pollutant=label,
        )
        writer = Writer(settings.out_dir)
        frame = prediction.to_frame()
        frame["timestamp"] = format_timestamps(frame["timestamp"])
        writer.write_csv(f"grid_{label}.csv", frame)
        if pgm:
            for cmap in prediction.maps():
                name = f"grid_{label}_{cmap.timestamp.strftime('%Y%m%dT%H')}.pgm"
                writer.write_pgm(name, grayscale_levels(store.area, cmap.values))
        writer.write_manifest()
        log_summary(
            "Grid prediction completed!",
            [
                f"Cells: {len(prediction.cell_ids)}, hours: {len(prediction.timestamps)}",
                f"Rows predicted: {prediction.values.size}",
                f"Throughput: {prediction.rows_per_second:,.0f} rows/s with {settings.workers} workers",
            ],
        )

    run_guarded(action)


@cli.command("fill-gaps")
@common_options
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False), help="Model file")
@click.option("--station", "station_id", required=True, help="Station id")
@click.option("--start", required=True, callback=_timestamp_option, help="First hour (ISO-8601)")
@click.option("--end", required=True, callback=_timestamp_option, help="End hour, exclusive (ISO-8601)")
@click.option("--pollutant", default=None, help="Pollutant (default: first recipe pollutant)")
def fill_gaps_cmd(settings_args, model_path: str, station_id: str, start, end, pollutant: Optional[str]):
    """Complete a station's hourly series with model predictions where measurements are missing."""

    def action():
        settings = settings_from(settings_args)
        label = pollutant or settings.pollutants[0]
        store, sites, measurements, _ = load_inputs(settings)
        by_id = {s.station_id: s for s in sites}
        if station_id not in by_id:
            raise ValidationError(f"Unknown station {station_id!r}")
        data = measurements[(measurements["station_id"] == station_id) & (measurements["pollutant"] == label)]
        series = pd.Series(data["value"].to_numpy(), index=pd.DatetimeIndex(data["timestamp"]))
        augmented = fill_gaps(series, Ensemble.load(Path(model_path)), store, by_id[station_id], start, end, label)

        writer = Writer(settings.out_dir)
        frame = augmented.frame.copy()
        frame["timestamp"] = format_timestamps(frame["timestamp"])
        writer.write_csv(f"augmented_{station_id}_{label}.csv", frame)
        writer.write_manifest()
        counts = augmented.counts
        log_summary(
            "Gap filling completed!",
            [f"Station: {station_id} ({label})", f"Measured: {counts.get('Measured', 0)}", f"Predicted: {counts.get('Predicted', 0)}"],
        )

    run_guarded(action)


@cli.command("exceedance")
@common_options
@click.option("--map-file", required=True, type=click.Path(dir_okay=False), help="CSV with cell_id,timestamp,value")
@click.option("--thresholds", default=None, callback=_thresholds_option, help="Comma-separated thresholds in ug/m3")
@click.option("--running-mean", is_flag=True, help="Count on the trailing 24-hour mean")
def exceedance_cmd(settings_args, map_file: str, thresholds, running_mean: bool):
    """Count threshold exceedances per cell from a prediction map."""

    def action():
        settings = settings_from(settings_args)
        frame = read_csv_checked(Path(map_file), ["cell_id", "timestamp", "value"])
        frame["timestamp"] = parse_timestamps(frame["timestamp"])
        ladder = exceedance_ladder(frame, thresholds or settings.thresholds, running_mean)

        study_area = Path(settings.input_dir) / INPUT_FILES["study_area"]
        area = load_study_area(study_area) if study_area.exists() else None
        writer = Writer(settings.out_dir)
        lines = []
        for threshold, emap in ladder.items():
            writer.write_csv(f"exceedance_{threshold:g}.csv", emap.to_frame())
            if area is not None:
                writer.write_pgm(f"exceedance_{threshold:g}.pgm", grayscale_levels(area, emap.counts))
            lines.append(
                f"> {threshold:g} ug/m3: {exceedance_share(emap) * 100:.1f}% of cells, "
                f"max {int(emap.counts.max())} of {emap.hours_in_period} hours"
            )
        writer.write_manifest()
        log_summary("Exceedance analysis completed!", lines)

    run_guarded(action)


@cli.command("report")
@common_options
def report_cmd(settings_args):
    """Summarise the experiment CSVs already written to --out-dir."""

    def action():
        settings = settings_from(settings_args)
        out_dir = Path(settings.out_dir)
        scores = read_csv_checked(out_dir / "scores.csv", ["pollutant", "subset", "test_r2"])
        lines = []
        for rec in scores.itertuples(index=False):
            lines.append(
                f"{rec.pollutant}/{rec.subset}: R2 train {rec.train_r2}, valid {rec.valid_r2}, test {rec.test_r2}"
            )
            lines.append(
                f"  best config: num_leaves={rec.best_num_leaves}, min_data_in_leaf={rec.best_min_data_in_leaf}, "
                f"l2_lambda={rec.best_l2_lambda}, learning_rate={rec.best_learning_rate}"
            )
        loov_path = out_dir / "loov.csv"
        if loov_path.exists():
            loov = read_csv_checked(loov_path, ["pollutant", "subset", "station_id", "r2"])
            for (pollutant, subset), group in loov.groupby(["pollutant", "subset"], sort=True):
                stats = summarise_scores(group["r2"].dropna().tolist())
                lines.append(
                    f"{pollutant}/{subset} LOOV: median {stats['median']}, mean {stats['mean']}, "
                    f"min {stats['min']}, max {stats['max']} over {stats['count']} stations"
                )
        importance_path = out_dir / "feature_importance.csv"
        clusters_paths = sorted(out_dir.glob("clusters_*.csv"))
        if importance_path.exists() and clusters_paths:
            importance = read_csv_checked(importance_path, ["pollutant", "feature", "split_count"])
            for path in clusters_paths:
                pollutant = path.stem.split("_", 1)[1]
                clusters = read_csv_checked(path, ["feature", "cluster"])
                counts = importance[importance["pollutant"] == pollutant].groupby("feature")["split_count"].sum()
                ranked = cluster_importance(counts.to_dict(), dict(zip(clusters["feature"], clusters["cluster"])))
                lines += [f"{pollutant} cluster {int(label)}: {int(total)} splits" for label, total in ranked.head(5).items()]
        log_summary("Experiment report", lines)

    run_guarded(action)


if __name__ == "__main__":
    cli()
