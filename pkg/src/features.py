"""Spearman feature analysis and hierarchical clustering of the feature set."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from scipy.stats import rankdata

from .errors import UndefinedMetricError, ValidationError

logger = logging.getLogger(__name__)

MAX_DISSIMILARITY = 2.0


def spearman(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """
    Spearman rank correlation with mid-ranks for ties.

    Pairs where either value is missing are dropped first.

    Args:
        x: First series
        y: Second series, same length

    Returns:
        rho in [-1, 1], or None when either ranked series is constant

    Raises:
        UndefinedMetricError: If fewer than 2 complete pairs remain
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"Series lengths differ: {x.shape[0]} vs {y.shape[0]}")
    keep = ~(np.isnan(x) | np.isnan(y))
    if keep.sum() < 2:
        raise UndefinedMetricError("Spearman correlation needs at least 2 complete pairs")
    rx = rankdata(x[keep])
    ry = rankdata(y[keep])
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        return None
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


@dataclass
class CorrelationReport:
    """
    Feature-target Spearman correlations per station and aggregated.

    per_station: station x feature rho (NaN where undefined)
    overall_mean: mean rho per feature over stations with a defined value
    class_means: feature x environment class mean rho
    excluded: per feature, number of stations with undefined rho
    """

    per_station: pd.DataFrame
    overall_mean: pd.Series
    class_means: pd.DataFrame
    excluded: pd.Series

    def top(self, k: int = 10) -> Tuple[pd.Series, pd.Series]:
        """The k most positive and k most negative features by overall mean."""
        ranked = self.overall_mean.dropna()
        positive = ranked.sort_values(ascending=False, kind="mergesort").head(k)
        negative = ranked.sort_values(ascending=True, kind="mergesort").head(k)
        return positive, negative

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"overall_mean_rho": self.overall_mean})
        frame = frame.join(self.class_means.add_suffix("_mean_rho"))
        frame["undefined_count"] = self.excluded
        frame.index.name = "feature"
        return frame


def correlation_report(
    features: pd.DataFrame,
    targets: pd.Series,
    stations: pd.Series,
    station_classes: Mapping[str, str],
) -> CorrelationReport:
    """
    Spearman correlation of every feature with each station's target series.

    Args:
        features: Feature rows at station cells, one column per feature
        targets: Target value per row (aligned to features)
        stations: station_id per row (aligned to features)
        station_classes: station_id -> environment class

    Returns:
        CorrelationReport

    Raises:
        ValidationError: If no station has 2 or more observations
    """
    features = features.reset_index(drop=True)
    targets = pd.Series(np.asarray(targets, dtype=np.float64))
    stations = pd.Series(np.asarray(stations).astype(str))

    rows: Dict[str, pd.Series] = {}
    for station_id in sorted(stations.unique()):
        mask = (stations == station_id).to_numpy()
        if mask.sum() < 2:
            logger.warning(f"Station {station_id} has fewer than 2 observations; skipped")
            continue
        y = targets[mask].to_numpy()
        values = {}
        for name in features.columns:
            try:
                rho = spearman(features.loc[mask, name].to_numpy(), y)
            except UndefinedMetricError:
                rho = None
            values[name] = np.nan if rho is None else rho
        rows[station_id] = pd.Series(values)
    if not rows:
        raise ValidationError("Correlation report needs at least one station with 2 observations")

    per_station = pd.DataFrame(rows).T.reindex(columns=features.columns)
    per_station.index.name = "station_id"
    overall = per_station.mean(axis=0, skipna=True)
    classes = per_station.index.map(lambda s: station_classes.get(s, "Unclassified"))
    class_means = per_station.groupby(classes).mean().T
    excluded = per_station.isna().sum(axis=0)
    return CorrelationReport(per_station, overall, class_means, excluded)


def clusterable_features(frame: pd.DataFrame) -> Tuple[List[str], List[str]]:
    """
    Split columns into those usable for clustering and those that are not.

    Columns that are entirely missing or constant have no defined rank
    correlation and are excluded.

    Returns:
        Tuple of (kept column names, excluded column names)
    """
    kept, excluded = [], []
    for name in frame.columns:
        values = frame[name].dropna()
        if values.nunique() < 2:
            excluded.append(name)
        else:
            kept.append(name)
    if excluded:
        logger.warning(f"{len(excluded)} features are constant or unobserved and are excluded from clustering")
    return kept, excluded


def feature_dissimilarity(frame: pd.DataFrame) -> Tuple[pd.DataFrame, List[Tuple[str, str]]]:
    """
    Pairwise dissimilarity d = 1 - rho between feature columns.

    Args:
        frame: Feature rows, one column per feature

    Returns:
        Tuple of (symmetric dissimilarity frame, pairs whose rho was undefined
        and were set to 2.0)

    Raises:
        ValidationError: If fewer than 2 columns are given
    """
    if frame.shape[1] < 2:
        raise ValidationError("Dissimilarity needs at least 2 feature columns")
    rho = frame.corr(method="spearman", min_periods=2)
    dissimilarity = (1.0 - rho).clip(lower=0.0, upper=MAX_DISSIMILARITY)

    undefined = dissimilarity.isna().to_numpy()
    np.fill_diagonal(undefined, False)
    names = list(frame.columns)
    flagged = [(names[i], names[j]) for i, j in zip(*np.nonzero(np.triu(undefined, 1)))]
    if flagged:
        logger.warning(f"{len(flagged)} feature pairs have undefined correlation; set to {MAX_DISSIMILARITY}")

    values = dissimilarity.to_numpy(copy=True)
    values[np.isnan(values)] = MAX_DISSIMILARITY
    np.fill_diagonal(values, 0.0)
    return pd.DataFrame(values, index=names, columns=names), flagged


@dataclass(frozen=True)
class FeatureDendrogram:
    """
    Average-linkage merge list.

    Leaves are numbered 0..n-1 in column order; merge i creates node n + i.
    """

    leaves: Tuple[str, ...]
    linkage_matrix: np.ndarray

    def merges(self) -> pd.DataFrame:
        z = self.linkage_matrix
        return pd.DataFrame(
            {
                "step": np.arange(1, z.shape[0] + 1),
                "node_a": z[:, 0].astype(np.int64),
                "node_b": z[:, 1].astype(np.int64),
                "distance": z[:, 2],
            }
        )


def build_dendrogram(dissimilarity: pd.DataFrame) -> FeatureDendrogram:
    """Average-linkage agglomeration of a square dissimilarity frame."""
    values = dissimilarity.to_numpy(dtype=np.float64)
    if values.shape[0] != values.shape[1] or not np.allclose(values, values.T):
        raise ValidationError("Dissimilarity matrix must be square and symmetric")
    leaves = tuple(str(c) for c in dissimilarity.columns)
    if len(leaves) < 2:
        return FeatureDendrogram(leaves, np.empty((0, 4)))
    condensed = squareform(values, checks=False)
    return FeatureDendrogram(leaves, linkage(condensed, method="average"))


def hierarchical_cluster(dissimilarity: pd.DataFrame, linkage_threshold: float) -> Dict[str, int]:
    """
    Cut an average-linkage dendrogram at a distance threshold.

    Features joined at a linkage distance at or below the threshold share a
    cluster. Labels are numbered from 1 in order of first appearance.

    Args:
        dissimilarity: Square symmetric dissimilarity frame
        linkage_threshold: Cut height

    Returns:
        Mapping feature -> cluster label
    """
    dendrogram = build_dendrogram(dissimilarity)
    if dendrogram.linkage_matrix.shape[0] == 0:
        return {leaf: 1 for leaf in dendrogram.leaves}
    raw = fcluster(dendrogram.linkage_matrix, t=linkage_threshold, criterion="distance")
    relabel: Dict[int, int] = {}
    for label in raw:
        relabel.setdefault(int(label), len(relabel) + 1)
    return {leaf: relabel[int(label)] for leaf, label in zip(dendrogram.leaves, raw)}


def cluster_importance(importance: Mapping[str, float], clusters: Mapping[str, int]) -> pd.Series:
    """
    Sum feature importances inside each correlation cluster.

    Features without a cluster are ignored.

    Returns:
        Series indexed by cluster label, sorted descending
    """
    totals: Dict[int, float] = {}
    for name, value in importance.items():
        if name in clusters:
            totals[clusters[name]] = totals.get(clusters[name], 0.0) + float(value)
    series = pd.Series(totals, dtype=np.float64, name="importance")
    series.index.name = "cluster"
    return series.sort_values(ascending=False, kind="mergesort")
