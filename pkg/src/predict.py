"""Synthetic stations: full-grid prediction and station gap filling."""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .errors import SchemaMismatchError, ValidationError
from .feature_store import FeatureStore
from .gbdt import Ensemble
from .grid import StationSite
from .schema import FEATURE_NAMES

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 65536
MEASURED = "Measured"
PREDICTED = "Predicted"


def model_columns(ensemble: Ensemble) -> Optional[np.ndarray]:
    """
    Positions of the model's features in the full feature matrix.

    Returns:
        None when the model uses every column in canonical order
    """
    names = tuple(ensemble.feature_names)
    if names == FEATURE_NAMES:
        return None
    position = {n: i for i, n in enumerate(FEATURE_NAMES)}
    unknown = [n for n in names if n not in position]
    if unknown:
        raise SchemaMismatchError(f"Model uses features the store does not provide: {unknown[:5]}")
    return np.array([position[n] for n in names], dtype=np.int64)


def predict_rows(ensemble: Ensemble, store: FeatureStore, cell_ids: np.ndarray, timestamps: pd.DatetimeIndex) -> np.ndarray:
    """Predict for aligned (cell, timestamp) pairs straight from the store."""
    values = store.rows(cell_ids, timestamps)
    columns = model_columns(ensemble)
    if columns is not None:
        values = values[:, columns]
    return ensemble.predict(values)


@dataclass
class AugmentedSeries:
    """A station's series over a span, measured where possible and predicted elsewhere."""

    station_id: str
    pollutant: str
    frame: pd.DataFrame

    @property
    def counts(self) -> dict:
        return self.frame["source"].value_counts().to_dict()


def hourly_span(start: pd.Timestamp, end: pd.Timestamp) -> pd.DatetimeIndex:
    """Hourly timestamps in the half-open span [start, end)."""
    start, end = pd.Timestamp(start), pd.Timestamp(end)
    if end <= start:
        raise ValidationError(f"Span end {end} must be after start {start}")
    return pd.date_range(start, end, freq="h", inclusive="left")


def fill_gaps(
    measurements: pd.Series,
    ensemble: Ensemble,
    store: FeatureStore,
    site: StationSite,
    start: pd.Timestamp,
    end: pd.Timestamp,
    pollutant: str = "",
) -> AugmentedSeries:
    """
    Complete a station's series over [start, end) at hourly steps.

    Hours with a measurement keep it unchanged; every other hour gets the
    model prediction at the station's snapped cell.

    Args:
        measurements: Values indexed by timestamp (missing values allowed)
        ensemble: Fitted model
        store: Feature store
        site: Station snapped to its cell
        start: First hour of the span
        end: End of the span (exclusive)
        pollutant: Label carried into the output

    Returns:
        AugmentedSeries with columns timestamp, value, source

    Raises:
        DataGapError: If features are missing for hours that need predicting
    """
    span = hourly_span(start, end)
    if measurements.index.has_duplicates:
        raise ValidationError(f"Station {site.station_id} has duplicate measurement timestamps")
    observed = measurements.dropna()
    observed = observed[observed.index.isin(span)]

    values = np.full(len(span), np.nan, dtype=np.float64)
    source = np.full(len(span), PREDICTED, dtype=object)
    position = span.get_indexer(pd.DatetimeIndex(observed.index))
    values[position] = observed.to_numpy(dtype=np.float64)
    source[position] = MEASURED

    gaps = np.flatnonzero(source == PREDICTED)
    if gaps.size:
        cells = np.full(gaps.size, site.snapped_cell, dtype=np.int64)
        values[gaps] = predict_rows(ensemble, store, cells, span[gaps])

    frame = pd.DataFrame({"timestamp": span, "value": values, "source": source})
    logger.info(
        f"Station {site.station_id}: {int((source == MEASURED).sum())} measured, {gaps.size} predicted hours"
    )
    return AugmentedSeries(station_id=site.station_id, pollutant=pollutant, frame=frame)


@dataclass(frozen=True)
class ConcentrationMap:
    """Predicted values for every cell at one timestamp."""

    pollutant: str
    timestamp: pd.Timestamp
    values: pd.Series


@dataclass
class GridPrediction:
    """Predictions over cells x timestamps, stored cell-major."""

    pollutant: str
    cell_ids: np.ndarray
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    rows_per_second: float

    def map_at(self, timestamp: pd.Timestamp) -> ConcentrationMap:
        t = self.timestamps.get_loc(pd.Timestamp(timestamp))
        series = pd.Series(self.values[:, t], index=pd.Index(self.cell_ids, name="cell_id"), name="value")
        return ConcentrationMap(self.pollutant, pd.Timestamp(timestamp), series)

    def maps(self) -> List[ConcentrationMap]:
        return [self.map_at(t) for t in self.timestamps]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "cell_id": np.repeat(self.cell_ids, len(self.timestamps)),
                "timestamp": np.tile(self.timestamps.to_numpy(), len(self.cell_ids)),
                "value": self.values.ravel(),
            }
        )


def _predict_blocks(
    ensemble: Ensemble,
    store: FeatureStore,
    blocks: Sequence[np.ndarray],
    timestamps: pd.DatetimeIndex,
) -> List[np.ndarray]:
    out = []
    n_times = len(timestamps)
    for cells in blocks:
        row_cells = np.repeat(cells, n_times)
        row_times = pd.DatetimeIndex(np.tile(timestamps.to_numpy(), cells.shape[0]))
        out.append(predict_rows(ensemble, store, row_cells, row_times).reshape(cells.shape[0], n_times))
    return out


def grid_predict(
    ensemble: Ensemble,
    store: FeatureStore,
    cell_ids: Sequence[int],
    timestamps: Sequence[pd.Timestamp],
    workers: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
    pollutant: str = "",
    progress: bool = True,
) -> GridPrediction:
    """
    Predict every (cell, timestamp) pair as if a station sat at each centroid.

    Work is sharded into blocks of cells holding about batch_size rows each.
    Blocks are processed by joblib workers and concatenated in block order,
    so the output is bitwise identical for any worker count.

    Args:
        ensemble: Fitted model
        store: Feature store
        cell_ids: Cells to predict
        timestamps: Timestamps to predict
        workers: Number of joblib workers
        batch_size: Approximate rows per block
        pollutant: Label carried into the output
        progress: Show a progress bar

    Returns:
        GridPrediction with a (cells, timestamps) value array
    """
    cells = store.area.index_of(list(cell_ids))
    stamps = pd.DatetimeIndex(list(timestamps))
    if cells.size == 0 or len(stamps) == 0:
        raise ValidationError("Grid prediction needs at least one cell and one timestamp")
    if batch_size < 1:
        raise ValidationError("batch_size must be positive")
    model_columns(ensemble)

    cells_per_block = max(1, batch_size // len(stamps))
    blocks = [cells[i : i + cells_per_block] for i in range(0, cells.size, cells_per_block)]
    n_chunks = min(len(blocks), max(1, workers) * 4)
    chunk_edges = np.linspace(0, len(blocks), n_chunks + 1).astype(int)
    chunks = [blocks[chunk_edges[i] : chunk_edges[i + 1]] for i in range(n_chunks)]

    started = time.perf_counter()
    pending = Parallel(n_jobs=workers, return_as="generator")(
        delayed(_predict_blocks)(ensemble, store, chunk, stamps) for chunk in chunks
    )
    results = list(tqdm(pending, total=len(chunks), desc="Predicting grid", unit="shard", disable=not progress))
    elapsed = time.perf_counter() - started
    values = np.vstack([block for chunk in results for block in chunk])

    n_rows = values.size
    rate = n_rows / elapsed if elapsed > 0 else float("inf")
    logger.info(f"Predicted {n_rows} rows in {elapsed:.2f}s ({rate:,.0f} rows/s, {workers} workers)")
    return GridPrediction(
        pollutant=pollutant,
        cell_ids=cells,
        timestamps=stamps,
        values=values,
        rows_per_second=rate,
    )
