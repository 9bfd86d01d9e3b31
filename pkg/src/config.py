"""Run settings: defaults, SYNSTATION_* environment variables, recipe files and CLI flags."""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv

from .errors import RecipeError, ValidationError
from .experiments import WIDE_NUM_LEAVES, Protocol, SearchSpace, SplitSpec
from .gbdt import TrainConfig
from .metrics import DEFAULT_THRESHOLDS
from .predict import DEFAULT_BATCH_SIZE
from .schema import POLLUTANTS, resolve_families

logger = logging.getLogger(__name__)

ENV_PREFIX = "SYNSTATION_"


def parse_years(text: str) -> Tuple[int, ...]:
    """
    Parse "2014,2015", "2014-2016" or a mix such as "2014-2015,2017".

    Returns:
        Sorted distinct years
    """
    years = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(v) for v in part.split("-", 1))
            if lo > hi:
                raise ValueError(f"year range {part} is reversed")
            years.update(range(lo, hi + 1))
        else:
            years.add(int(part))
    if not years:
        raise ValueError("no years given")
    return tuple(sorted(years))


def parse_range(text: str, kind: Callable = float) -> Tuple:
    """Parse "lo:hi" into a (lo, hi) tuple of the given kind."""
    lo, hi = text.split(":")
    lo, hi = kind(lo.strip()), kind(hi.strip())
    if lo > hi:
        raise ValueError(f"range {text} has lo > hi")
    return (lo, hi)


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_names(text: str) -> Tuple[str, ...]:
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    if not names:
        raise ValueError("empty list")
    return names


def parse_thresholds(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in parse_names(text))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(f"must be at least 1, got {value}")
    return value


@dataclass(frozen=True)
class Settings:
    """Every tunable of a run, after layering."""

    input_dir: str = "data"
    out_dir: str = "out"
    pollutants: Tuple[str, ...] = ("NO2",)
    families: Tuple[str, ...] = ("All",)
    train_years: Tuple[int, ...] = (2014, 2015, 2016)
    validation_years: Tuple[int, ...] = (2017,)
    test_years: Tuple[int, ...] = (2018,)
    n_configs: int = 40
    seed: int = 0
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    predict_batch_size: int = DEFAULT_BATCH_SIZE
    num_leaves_range: Tuple[int, int] = WIDE_NUM_LEAVES
    min_data_in_leaf_range: Tuple[int, int] = (20, 200)
    l2_lambda_range: Tuple[float, float] = (1e-3, 10.0)
    learning_rate_range: Tuple[float, float] = (0.02, 0.3)
    max_trees: int = 500
    early_stopping_rounds: int = 30
    goss_top_rate: float = 0.2
    goss_other_rate: float = 0.1
    loov_folds: int = 5
    reuse_search_in_loov: bool = False
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS

    def __post_init__(self):
        unknown = sorted(set(self.pollutants) - set(POLLUTANTS))
        if unknown:
            raise ValidationError(f"Unknown pollutants: {unknown}")
        resolve_families(self.families)
        if not self.thresholds:
            raise ValidationError("At least one threshold is required")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_trees=self.max_trees,
            early_stopping_rounds=self.early_stopping_rounds,
            goss_top_rate=self.goss_top_rate,
            goss_other_rate=self.goss_other_rate,
            seed=self.seed,
        )

    def protocol(self, progress: bool = True) -> Protocol:
        """Experiment protocol built from these settings."""
        return Protocol(
            split=SplitSpec(self.train_years, self.validation_years, self.test_years),
            space=SearchSpace(
                num_leaves=self.num_leaves_range,
                min_data_in_leaf=self.min_data_in_leaf_range,
                l2_lambda=self.l2_lambda_range,
                learning_rate=self.learning_rate_range,
            ),
            n_configs=self.n_configs,
            seed=self.seed,
            base_config=self.train_config(),
            workers=self.workers,
            progress=progress,
        )


# key -> parser of its text value
PARSERS: Dict[str, Callable[[str], object]] = {
    "input_dir": str.strip,
    "out_dir": str.strip,
    "pollutants": parse_names,
    "families": parse_names,
    "train_years": parse_years,
    "validation_years": parse_years,
    "test_years": parse_years,
    "n_configs": _positive_int,
    "seed": int,
    "workers": _positive_int,
    "predict_batch_size": _positive_int,
    "num_leaves_range": lambda v: parse_range(v, int),
    "min_data_in_leaf_range": lambda v: parse_range(v, int),
    "l2_lambda_range": parse_range,
    "learning_rate_range": parse_range,
    "max_trees": _positive_int,
    "early_stopping_rounds": _positive_int,
    "goss_top_rate": float,
    "goss_other_rate": float,
    "loov_folds": _positive_int,
    "reuse_search_in_loov": parse_bool,
    "thresholds": parse_thresholds,
}

RECIPE_KEYS = frozenset(PARSERS) - {"out_dir", "workers", "predict_batch_size"}


def settings_from_env(env: Optional[Mapping[str, str]] = None) -> Dict[str, object]:
    """Values set through SYNSTATION_<KEY> variables."""
    env = os.environ if env is None else env
    values = {}
    for key, parser in PARSERS.items():
        name = ENV_PREFIX + key.upper()
        if name in env and env[name].strip():
            try:
                values[key] = parser(env[name])
            except ValueError as e:
                raise ValidationError(f"{name}: {e}") from e
    return values


def read_recipe(path: Path) -> Dict[str, object]:
    """
    Parse a recipe file of `key = value` lines.

    Blank lines and lines starting with # are ignored. A relative input_dir
    is resolved against the recipe's directory.

    Args:
        path: Recipe file

    Returns:
        Parsed values by key

    Raises:
        RecipeError: On a malformed line, unknown key or bad value (with line number)
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Recipe {path} does not exist")
    values: Dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise RecipeError(f"expected 'key = value', got {line!r}", line_number)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in RECIPE_KEYS:
                raise RecipeError(f"unknown key {key!r}", line_number)
            try:
                values[key] = PARSERS[key](value)
            except ValueError as e:
                raise RecipeError(f"bad value for {key}: {e}", line_number) from e
    if "input_dir" in values and not Path(values["input_dir"]).is_absolute():
        values["input_dir"] = str(path.parent / values["input_dir"])
    return values


def load_settings(
    recipe_path: Optional[Path] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, object]] = None,
    use_dotenv: bool = True,
) -> Settings:
    """
    Layer defaults, environment, recipe and explicit overrides (later wins).

    Args:
        recipe_path: Optional recipe file
        env: Environment mapping (defaults to os.environ)
        overrides: Explicit values such as CLI flags; None entries are ignored
        use_dotenv: Load a .env file into the process environment first

    Returns:
        Settings
    """
    if use_dotenv and env is None:
        load_dotenv()
    values: Dict[str, object] = {}
    values.update(settings_from_env(env))
    if recipe_path is not None:
        values.update(read_recipe(recipe_path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    known = {f.name for f in fields(Settings)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValidationError(f"Unknown settings: {unknown}")
    settings = replace(Settings(), **values)
    logger.debug(f"Settings: {settings}")
    return settings
