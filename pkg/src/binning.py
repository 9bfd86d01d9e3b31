"""Quantile binning of raw feature values for histogram-based trees."""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_MAX_BIN = 255


@dataclass(frozen=True)
class BinMapper:
    """
    Per-feature cut points.

    Feature f has len(cuts[f]) + 1 value bins; value x falls in the first bin
    b with x <= cuts[f][b]. Missing values go to the reserved bin max_bin.
    """

    cuts: List[np.ndarray]
    max_bin: int = DEFAULT_MAX_BIN

    @property
    def n_features(self) -> int:
        return len(self.cuts)

    @property
    def missing_bin(self) -> int:
        return self.max_bin

    @property
    def n_bins(self) -> np.ndarray:
        """Number of value bins per feature (the missing bin excluded)."""
        return np.array([c.shape[0] + 1 for c in self.cuts], dtype=np.int64)

    @property
    def dtype(self):
        return np.uint8 if self.max_bin <= 255 else np.uint16

    def transform(self, values: np.ndarray) -> np.ndarray:
        """
        Map raw values to bin codes.

        Args:
            values: (n, n_features) raw matrix; NaN means missing

        Returns:
            (n, n_features) array of bin codes
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.n_features:
            raise ValidationError(f"Expected {self.n_features} feature columns, got shape {values.shape}")
        binned = np.empty(values.shape, dtype=self.dtype)
        for f, cuts in enumerate(self.cuts):
            column = values[:, f]
            codes = np.searchsorted(cuts, column, side="left")
            codes[np.isnan(column)] = self.missing_bin
            binned[:, f] = codes
        return binned


def _feature_cuts(column: np.ndarray, max_bin: int) -> np.ndarray:
    present = column[~np.isnan(column)]
    if present.size == 0:
        return np.empty(0, dtype=np.float64)
    distinct = np.unique(present)
    if distinct.shape[0] <= max_bin:
        return (distinct[:-1] + distinct[1:]) / 2.0
    levels = np.linspace(0.0, 1.0, max_bin + 1)[1:-1]
    cuts = np.unique(np.quantile(present, levels, method="linear"))
    # a cut equal to the maximum would leave the last bin empty
    return cuts[cuts < distinct[-1]]


def build_bin_mapper(values: np.ndarray, max_bin: int = DEFAULT_MAX_BIN) -> BinMapper:
    """
    Fit quantile cut points for every feature column.

    Features with at most max_bin distinct values get one bin per value,
    with cuts halfway between neighbours. Otherwise cut points sit at evenly
    spaced quantiles.

    Args:
        values: (n, F) raw matrix with at least one row; NaN means missing
        max_bin: Maximum number of value bins per feature

    Returns:
        BinMapper
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValidationError("Binning needs a 2-D matrix with at least one row")
    if not 2 <= max_bin <= 65535:
        raise ValidationError(f"max_bin must be in 2..65535, got {max_bin}")
    if np.isinf(values).any():
        raise ValidationError("Feature values must be finite or NaN")
    cuts = [_feature_cuts(values[:, f], max_bin) for f in range(values.shape[1])]
    logger.debug(f"Binned {values.shape[1]} features, max {max(c.shape[0] + 1 for c in cuts)} bins")
    return BinMapper(cuts=cuts, max_bin=max_bin)
