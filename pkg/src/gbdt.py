"""Gradient-boosted regression ensemble with GOSS sampling and early stopping."""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .binning import DEFAULT_MAX_BIN, BinMapper, build_bin_mapper
from .errors import SchemaMismatchError, ValidationError
from .schema import schema_hash
from .tree import LEAF, SPLIT, Tree, grow_tree

logger = logging.getLogger(__name__)

LOG_EPSILON = 1e-7
FORMAT_VERSION = 1
MODEL_HEADER = "synthetic-stations gbdt"


def log_transform(y: Sequence[float]) -> np.ndarray:
    """ln(y + 1e-7); y must be nonnegative."""
    y = np.asarray(y, dtype=np.float64)
    if (y < 0).any():
        raise ValidationError("Targets must be nonnegative before the log transform")
    return np.log(y + LOG_EPSILON)


def inverse_transform(y_log: Sequence[float]) -> np.ndarray:
    """max(exp(y') - 1e-7, 0)."""
    return np.maximum(np.exp(np.asarray(y_log, dtype=np.float64)) - LOG_EPSILON, 0.0)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one boosting run."""

    num_leaves: int = 31
    min_data_in_leaf: int = 20
    l2_lambda: float = 0.0
    learning_rate: float = 0.1
    max_bin: int = DEFAULT_MAX_BIN
    early_stopping_rounds: int = 30
    goss_top_rate: float = 0.2
    goss_other_rate: float = 0.1
    max_trees: int = 500
    boosting: str = "goss"
    min_split_gain: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValidationError(f"num_leaves must be at least 2, got {self.num_leaves}")
        if self.min_data_in_leaf < 1:
            raise ValidationError("min_data_in_leaf must be at least 1")
        if self.l2_lambda < 0:
            raise ValidationError("l2_lambda must be nonnegative")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 < self.goss_top_rate <= 1:
            raise ValidationError(f"goss_top_rate must be in (0, 1], got {self.goss_top_rate}")
        if not 0 <= self.goss_other_rate <= 1 - self.goss_top_rate + 1e-12:
            raise ValidationError(f"goss_other_rate must be in [0, 1 - top_rate], got {self.goss_other_rate}")
        if self.boosting not in ("goss", "gbdt"):
            raise ValidationError(f"Unknown boosting mode {self.boosting!r}")
        if self.max_trees < 0 or self.early_stopping_rounds < 1:
            raise ValidationError("max_trees must be >= 0 and early_stopping_rounds >= 1")

    def with_overrides(self, **values) -> "TrainConfig":
        return replace(self, **values)


def goss_sample(
    gradients: np.ndarray,
    top_rate: float,
    other_rate: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient-based one-side sampling.

    The ceil(a*n) rows with the largest |gradient| are kept with weight 1;
    ceil(b*n) of the remaining rows are drawn uniformly and weighted
    (1 - a) / b.

    Args:
        gradients: Per-row gradients
        top_rate: a, fraction kept by gradient magnitude
        other_rate: b, fraction sampled from the rest
        rng: Random generator

    Returns:
        Tuple of (sorted row indices, weight per returned row)
    """
    gradients = np.asarray(gradients, dtype=np.float64)
    n = gradients.shape[0]
    if top_rate >= 1.0:
        return np.arange(n, dtype=np.int64), np.ones(n, dtype=np.float64)

    top_n = min(n, math.ceil(top_rate * n - 1e-9))
    order = np.argsort(-np.abs(gradients), kind="stable")
    top = order[:top_n]
    rest = order[top_n:]
    rand_n = min(rest.shape[0], math.ceil(other_rate * n - 1e-9)) if other_rate > 0 else 0
    sampled = rng.choice(rest, size=rand_n, replace=False) if rand_n else np.empty(0, dtype=np.int64)

    indices = np.concatenate([top, sampled]).astype(np.int64)
    weights = np.concatenate([np.ones(top.shape[0]), np.full(sampled.shape[0], (1.0 - top_rate) / other_rate if rand_n else 1.0)])
    order = np.argsort(indices, kind="stable")
    return indices[order], weights[order]


def _check_finite(values: np.ndarray, what: str) -> None:
    if np.isinf(values).any():
        raise ValidationError(f"{what} contains infinite feature values")


@dataclass
class Ensemble:
    """
    A fitted boosted ensemble.

    Predictions in log space are base_score plus learning_rate times the
    leaf values of trees[0:best_iteration], summed in tree order.
    """

    trees: List[Tree]
    learning_rate: float
    base_score: float
    bin_mapper: BinMapper
    feature_names: Tuple[str, ...]
    best_iteration: int
    config: TrainConfig = field(default_factory=TrainConfig)
    train_loss: List[float] = field(default_factory=list)
    valid_loss: List[float] = field(default_factory=list)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)

    def _binned(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(
                f"Model expects {len(self.feature_names)} features, got rows of shape {rows.shape}"
            )
        _check_finite(rows, "Prediction rows")
        return self.bin_mapper.transform(rows)

    def predict_log(self, rows: np.ndarray) -> np.ndarray:
        """Raw log-space predictions."""
        binned = self._binned(rows)
        out = np.full(binned.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees[: self.best_iteration]:
            out = out + self.learning_rate * tree.predict_binned(binned, self.bin_mapper.missing_bin)
        return out

    def predict(self, rows: np.ndarray) -> np.ndarray:
        """Predictions in original units (never negative)."""
        return inverse_transform(self.predict_log(rows))

    def feature_importance(self) -> Dict[str, int]:
        """Number of splits using each feature in the trees used for prediction."""
        counts = np.zeros(len(self.feature_names), dtype=np.int64)
        for tree in self.trees[: self.best_iteration]:
            used = tree.feature[tree.kind == SPLIT]
            counts += np.bincount(used, minlength=len(self.feature_names))
        return {name: int(c) for name, c in zip(self.feature_names, counts)}

    def to_text(self) -> str:
        """Serialise to the versioned flat text format."""
        lines = [
            f"# {MODEL_HEADER}",
            f"format_version={FORMAT_VERSION}",
            f"schema_hash={self.schema_hash}",
            f"feature_names={'|'.join(self.feature_names)}",
            f"learning_rate={float(self.learning_rate).hex()}",
            f"base_score={float(self.base_score).hex()}",
            f"best_iteration={self.best_iteration}",
            f"max_bin={self.bin_mapper.max_bin}",
        ]
        for key, value in asdict(self.config).items():
            lines.append(f"config.{key}={float(value).hex() if isinstance(value, float) else value}")
        for f, cuts in enumerate(self.bin_mapper.cuts):
            lines.append(f"cuts,{f}," + " ".join(float(c).hex() for c in cuts))
        lines.append(f"trees={len(self.trees)}")
        lines.append("tree_id,node_id,kind,feature,bin_threshold,default_dir,left,right,value,count")
        for t, tree in enumerate(self.trees):
            for i in range(tree.n_nodes):
                kind = "leaf" if tree.kind[i] == LEAF else "split"
                default_dir = "L" if tree.default_left[i] else "R"
                lines.append(
                    f"{t},{i},{kind},{tree.feature[i]},{tree.threshold[i]},{default_dir},"
                    f"{tree.left[i]},{tree.right[i]},{float(tree.value[i]).hex()},{tree.count[i]}"
                )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Ensemble":
        """Parse the text format produced by to_text."""
        header: Dict[str, str] = {}
        config_values: Dict[str, str] = {}
        cuts: Dict[int, np.ndarray] = {}
        nodes: Dict[int, List[List[str]]] = {}
        n_trees = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("tree_id,"):
                continue
            if line.startswith("cuts,"):
                _, f, values = line.split(",", 2)
                cuts[int(f)] = np.array([float.fromhex(v) for v in values.split()], dtype=np.float64)
            elif n_trees is None and "=" in line:
                key, value = line.split("=", 1)
                if key == "trees":
                    n_trees = int(value)
                elif key.startswith("config."):
                    config_values[key[len("config."):]] = value
                else:
                    header[key] = value
            else:
                parts = line.split(",")
                if len(parts) != 10:
                    raise ValidationError(f"Malformed model node line: {line!r}")
                nodes.setdefault(int(parts[0]), []).append(parts)

        if int(header.get("format_version", -1)) != FORMAT_VERSION:
            raise ValidationError(f"Unsupported model format version {header.get('format_version')}")
        names = tuple(header["feature_names"].split("|")) if header.get("feature_names") else ()
        if schema_hash(names) != header.get("schema_hash"):
            raise SchemaMismatchError("Model schema hash does not match its feature names")

        typed = {}
        for f in fields(TrainConfig):
            if f.name not in config_values:
                continue
            value = config_values[f.name]
            if f.type in (float, "float"):
                typed[f.name] = float.fromhex(value)
            elif f.type in (int, "int"):
                typed[f.name] = int(value)
            else:
                typed[f.name] = value
        config = TrainConfig(**typed)

        mapper = BinMapper(cuts=[cuts[f] for f in range(len(names))], max_bin=int(header["max_bin"]))
        trees = []
        for t in range(n_trees or 0):
            rows = sorted(nodes.get(t, []), key=lambda p: int(p[1]))
            n = len(rows)
            tree = Tree(
                kind=np.array([SPLIT if p[2] == "split" else LEAF for p in rows], dtype=np.int8),
                feature=np.array([int(p[3]) for p in rows], dtype=np.int64),
                threshold=np.array([int(p[4]) for p in rows], dtype=np.int64),
                default_left=np.array([p[5] == "L" for p in rows], dtype=bool),
                left=np.array([int(p[6]) for p in rows], dtype=np.int64),
                right=np.array([int(p[7]) for p in rows], dtype=np.int64),
                value=np.array([float.fromhex(p[8]) for p in rows], dtype=np.float64),
                count=np.array([int(p[9]) for p in rows], dtype=np.int64),
            )
            if n == 0:
                raise ValidationError(f"Model tree {t} has no nodes")
            trees.append(tree)

        return cls(
            trees=trees,
            learning_rate=float.fromhex(header["learning_rate"]),
            base_score=float.fromhex(header["base_score"]),
            bin_mapper=mapper,
            feature_names=names,
            best_iteration=int(header["best_iteration"]),
            config=config,
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Ensemble":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.mean(diff * diff))


def fit(
    train_x: np.ndarray,
    train_y: Sequence[float],
    valid_x: np.ndarray,
    valid_y: Sequence[float],
    config: Optional[TrainConfig] = None,
    feature_names: Optional[Sequence[str]] = None,
    progress: bool = False,
) -> Ensemble:
    """
    Boost regression trees on log-transformed targets.

    Gradients are pred - y with unit hessians. After every tree the
    validation MSE in log space is recorded; training stops when it has not
    improved for early_stopping_rounds trees or max_trees is reached.

    Args:
        train_x: (n, F) training features; NaN means missing
        train_y: Raw nonnegative training targets
        valid_x: (m, F) validation features
        valid_y: Raw nonnegative validation targets
        config: Hyperparameters
        feature_names: Column names, defaulting to f0..f{F-1}
        progress: Show a progress bar over trees

    Returns:
        Fitted Ensemble
    """
    config = config or TrainConfig()
    train_x = np.asarray(train_x, dtype=np.float64)
    valid_x = np.asarray(valid_x, dtype=np.float64)
    if train_x.ndim != 2 or train_x.shape[0] == 0:
        raise ValidationError("Training set is empty")
    if valid_x.ndim != 2 or valid_x.shape[0] == 0:
        raise ValidationError("Validation set is empty")
    if valid_x.shape[1] != train_x.shape[1]:
        raise SchemaMismatchError("Training and validation sets have different feature counts")
    _check_finite(train_x, "Training set")
    _check_finite(valid_x, "Validation set")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(train_x.shape[1]))
    if len(names) != train_x.shape[1]:
        raise SchemaMismatchError(f"{len(names)} feature names for {train_x.shape[1]} columns")

    y_train = log_transform(train_y)
    y_valid = log_transform(valid_y)
    if y_train.shape[0] != train_x.shape[0] or y_valid.shape[0] != valid_x.shape[0]:
        raise ValidationError("Target length does not match the feature rows")

    mapper = build_bin_mapper(train_x, config.max_bin)
    binned_train = mapper.transform(train_x)
    binned_valid = mapper.transform(valid_x)
    n_bins = mapper.n_bins
    missing_bin = mapper.missing_bin

    base = float(np.mean(y_train))
    pred_train = np.full(y_train.shape[0], base)
    pred_valid = np.full(y_valid.shape[0], base)
    hessians = np.ones(y_train.shape[0], dtype=np.float64)
    rng = np.random.default_rng(config.seed)

    trees: List[Tree] = []
    train_loss: List[float] = []
    valid_loss: List[float] = []
    best_loss = _mse(pred_valid, y_valid)
    best_iteration = 0
    top_rate = config.goss_top_rate if config.boosting == "goss" else 1.0

    for iteration in tqdm(range(config.max_trees), desc="Boosting", unit="tree", disable=not progress):
        gradients = pred_train - y_train
        rows, weights = goss_sample(gradients, top_rate, config.goss_other_rate, rng)
        weighted_g = np.zeros_like(gradients)
        weighted_h = np.zeros_like(hessians)
        weighted_g[rows] = gradients[rows] * weights
        weighted_h[rows] = hessians[rows] * weights

        root = grow_tree(
            binned_train,
            weighted_g,
            weighted_h,
            rows,
            n_bins,
            missing_bin,
            config.num_leaves,
            config.min_data_in_leaf,
            config.l2_lambda,
            config.min_split_gain,
        )
        tree = Tree.from_root(root)
        trees.append(tree)
        pred_train = pred_train + config.learning_rate * tree.predict_binned(binned_train, missing_bin)
        pred_valid = pred_valid + config.learning_rate * tree.predict_binned(binned_valid, missing_bin)
        train_loss.append(_mse(pred_train, y_train))
        valid_loss.append(_mse(pred_valid, y_valid))

        if valid_loss[-1] < best_loss:
            best_loss = valid_loss[-1]
            best_iteration = iteration + 1
        elif iteration + 1 - best_iteration >= config.early_stopping_rounds:
            logger.debug(f"Early stopping after {iteration + 1} trees, best {best_iteration}")
            break

    logger.debug(
        f"Fitted {len(trees)} trees (best {best_iteration}), valid log-MSE {best_loss:.5f}"
    )
    return Ensemble(
        trees=trees,
        learning_rate=config.learning_rate,
        base_score=base,
        bin_mapper=mapper,
        feature_names=names,
        best_iteration=best_iteration,
        config=config,
        train_loss=train_loss,
        valid_loss=valid_loss,
    )


def predict(ensemble: Ensemble, rows: np.ndarray) -> np.ndarray:
    """
    Predict concentrations for feature rows.

    Rows are independent, so any partition of the rows yields bitwise the
    same values as one call over all of them.
    """
    return ensemble.predict(rows)
