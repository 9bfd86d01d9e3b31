"""Scores and policy analyses: R2, peak distance, running means and exceedances."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import UndefinedMetricError, ValidationError
from .grid import StudyArea

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (10.0, 25.0, 40.0, 200.0)
WINDOW_HOURS = 24
HOURS_PER_YEAR = 8760


def r_squared(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    """
    Coefficient of determination, 1 - SS_res / SS_tot.

    Raises:
        UndefinedMetricError: With fewer than 2 values or constant actuals
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if predictions.shape != actuals.shape:
        raise ValidationError(f"Length mismatch: {predictions.shape[0]} predictions, {actuals.shape[0]} actuals")
    if actuals.shape[0] < 2:
        raise UndefinedMetricError("R2 needs at least 2 values")
    residual = actuals - predictions
    centred = actuals - actuals.mean()
    ss_tot = float((centred * centred).sum())
    if ss_tot == 0:
        raise UndefinedMetricError("R2 is undefined for constant actuals")
    return 1.0 - float((residual * residual).sum()) / ss_tot


def log_mse(predictions: Sequence[float], actuals: Sequence[float], epsilon: float = 1e-7) -> float:
    """Mean squared error between ln(x + epsilon) of predictions and actuals."""
    p = np.log(np.asarray(predictions, dtype=np.float64) + epsilon)
    a = np.log(np.asarray(actuals, dtype=np.float64) + epsilon)
    return float(np.mean((p - a) ** 2))


@dataclass(frozen=True)
class PeakReport:
    """How far the model was from a station's highest measured value."""

    station_id: str
    pollutant: str
    measured_peak: float
    peak_timestamp: pd.Timestamp
    model_prediction_at_peak: float
    peak_distance_pct: float

    @staticmethod
    def distance(measured_peak: float, prediction: float) -> float:
        """(peak - prediction) / peak * 100."""
        if measured_peak == 0:
            raise UndefinedMetricError("Peak distance is undefined for a zero peak")
        return (measured_peak - prediction) / measured_peak * 100.0


def peak_distance(
    measured: pd.Series,
    predicted: pd.Series,
    station_id: str = "",
    pollutant: str = "",
) -> PeakReport:
    """
    Signed percentage error of the model at the measured peak.

    Args:
        measured: Measurements indexed by timestamp
        predicted: Predictions indexed by timestamp
        station_id: Station label carried into the report
        pollutant: Pollutant label carried into the report

    Returns:
        PeakReport; ties for the peak resolve to the earliest timestamp

    Raises:
        UndefinedMetricError: If there is no finite measurement
        ValidationError: If there is no prediction at the peak timestamp
    """
    finite = measured[np.isfinite(measured.to_numpy(dtype=np.float64))].sort_index(kind="mergesort")
    if finite.empty:
        raise UndefinedMetricError("No finite measurement to take a peak from")
    position = int(np.argmax(finite.to_numpy(dtype=np.float64)))
    peak_time = finite.index[position]
    peak_value = float(finite.iloc[position])
    if peak_time not in predicted.index or not np.isfinite(predicted.loc[peak_time]):
        raise ValidationError(f"No prediction at peak timestamp {peak_time}")
    prediction = float(predicted.loc[peak_time])
    return PeakReport(
        station_id=station_id,
        pollutant=pollutant,
        measured_peak=peak_value,
        peak_timestamp=pd.Timestamp(peak_time),
        model_prediction_at_peak=prediction,
        peak_distance_pct=PeakReport.distance(peak_value, prediction),
    )


def mean_peak_distance(reports: Sequence[PeakReport]) -> float:
    """Arithmetic mean of peak distances."""
    if not reports:
        raise ValidationError("No peak reports to average")
    return float(np.mean([r.peak_distance_pct for r in reports]))


def exceedance_count(values: Sequence[float], threshold: float) -> int:
    """Number of values strictly above the threshold (missing values never count)."""
    values = np.asarray(values, dtype=np.float64)
    return int((values > threshold).sum())


def running_mean_24h(series: pd.Series) -> pd.Series:
    """
    Trailing 24-hour mean of an hourly series.

    The first 23 hours are undefined, and so is every window with a missing
    hour. Gaps in the timestamp index count as missing hours.

    Args:
        series: Values indexed by strictly increasing timestamps

    Returns:
        Series on the same index

    Raises:
        ValidationError: If the index is not strictly increasing
    """
    index = pd.DatetimeIndex(series.index)
    if len(index) and not (index.is_monotonic_increasing and index.is_unique):
        raise ValidationError("Running mean needs a strictly increasing timestamp index")
    if len(index) == 0:
        return series.astype(np.float64)
    hourly = pd.date_range(index[0], index[-1], freq="h")
    full = series.astype(np.float64).reindex(hourly).to_numpy()
    means = np.full(full.shape[0], np.nan)
    if full.shape[0] >= WINDOW_HOURS:
        windows = sliding_window_view(full, WINDOW_HOURS)
        means[WINDOW_HOURS - 1 :] = windows.sum(axis=1) / WINDOW_HOURS
    return pd.Series(means, index=hourly, name=series.name).reindex(index)


def daily_means(series: pd.Series) -> pd.Series:
    """Calendar-day mean of the hours present in each day."""
    series = series.astype(np.float64)
    return series.groupby(pd.DatetimeIndex(series.index).normalize()).mean()


def peak_context(series: pd.Series) -> Dict[str, object]:
    """
    Relate a series' hourly peak to daily and annual means of its year.

    Returns:
        Dict with peak_value, peak_timestamp, max_daily_mean and annual_mean
    """
    finite = series[np.isfinite(series.to_numpy(dtype=np.float64))].sort_index(kind="mergesort")
    if finite.empty:
        raise UndefinedMetricError("No finite values")
    position = int(np.argmax(finite.to_numpy(dtype=np.float64)))
    peak_time = pd.Timestamp(finite.index[position])
    same_year = finite[pd.DatetimeIndex(finite.index).year == peak_time.year]
    return {
        "peak_value": float(finite.iloc[position]),
        "peak_timestamp": peak_time,
        "max_daily_mean": float(daily_means(same_year).max()),
        "annual_mean": float(same_year.mean()),
    }


@dataclass(frozen=True)
class ExceedanceMap:
    """Hours above a threshold per cell over a period."""

    threshold: float
    counts: pd.Series
    hours_in_period: int

    def __post_init__(self):
        if (self.counts < 0).any() or (self.counts > self.hours_in_period).any():
            raise ValidationError("Exceedance counts must lie between 0 and the hours in the period")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"cell_id": self.counts.index.to_numpy(), "count": self.counts.to_numpy()})


def exceedance_map(frame: pd.DataFrame, threshold: float, running_mean: bool = False) -> ExceedanceMap:
    """
    Count exceedances per cell from a long map frame.

    Args:
        frame: Columns cell_id, timestamp, value
        threshold: Threshold in ug/m3
        running_mean: Count on the trailing 24-hour mean instead of hourly values

    Returns:
        ExceedanceMap
    """
    data = frame.sort_values(["cell_id", "timestamp"], kind="mergesort")
    hours = int(data["timestamp"].nunique())
    counts = {}
    for cell_id, group in data.groupby("cell_id", sort=True):
        values = group.set_index("timestamp")["value"]
        if running_mean:
            values = running_mean_24h(values)
        counts[int(cell_id)] = exceedance_count(values.to_numpy(), threshold)
    series = pd.Series(counts, dtype=np.int64, name="count")
    series.index.name = "cell_id"
    return ExceedanceMap(threshold=float(threshold), counts=series, hours_in_period=hours)


def exceedance_ladder(
    frame: pd.DataFrame,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    running_mean: bool = False,
) -> Dict[float, ExceedanceMap]:
    """One ExceedanceMap per threshold."""
    if not thresholds:
        raise ValidationError("At least one threshold is required")
    return {float(t): exceedance_map(frame, t, running_mean) for t in thresholds}


def exceedance_share(emap: ExceedanceMap) -> float:
    """Fraction of cells that exceeded the threshold at least once."""
    if emap.counts.empty:
        raise ValidationError("Exceedance map has no cells")
    return float((emap.counts >= 1).sum()) / float(len(emap.counts))


def grayscale_levels(area: StudyArea, counts: pd.Series) -> np.ndarray:
    """
    8-bit raster levels round(255 * count / max_count), north up.

    Halves round up. Cells outside the mask, and every cell when the maximum
    is zero, get level 0.

    Returns:
        uint8 array of shape area.shape with the northernmost row first
    """
    values = counts.reindex(area.cell_ids).fillna(0).to_numpy(dtype=np.float64)
    peak = values.max() if values.size else 0.0
    levels = np.zeros_like(values) if peak <= 0 else np.floor(255.0 * values / peak + 0.5)
    raster = area.to_raster(levels, fill=0.0)
    return np.flipud(raster).astype(np.uint8)


def summarise_scores(scores: Sequence[Optional[float]]) -> Dict[str, Optional[float]]:
    """Max, min, mean and median of the defined scores."""
    defined = np.array([s for s in scores if s is not None and np.isfinite(s)], dtype=np.float64)
    if defined.size == 0:
        return {"max": None, "min": None, "mean": None, "median": None, "count": 0}
    return {
        "max": float(defined.max()),
        "min": float(defined.min()),
        "mean": float(defined.mean()),
        "median": float(np.median(defined)),
        "count": int(defined.size),
    }
