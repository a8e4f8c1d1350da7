"""
Run configuration.

Settings are addressed by flat dotted keys such as ``soqfr.basis_size`` or
``cv.repeats``. Sources apply in order: defaults, config file (JSON or
YAML), the ``QDIST_THREADS`` environment variable, command-line flags.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .shared.errors import ValidationError
from .shared.runner import THREADS_ENV, resolve_threads


@dataclass
class DataConfig:
    observations: Optional[str] = None
    subjects: Optional[str] = None
    domains: Optional[str] = None
    feature: Optional[str] = None
    covariates: list = field(default_factory=list)


@dataclass
class GridConfig:
    resolution: int = 100


@dataclass
class LMomentConfig:
    order: int = 4
    method: str = "projection"
    orders: Optional[list] = None


@dataclass
class SoqfrConfig:
    family: Optional[str] = None
    basis: str = "bspline"
    basis_size: int = 10
    degree: int = 3
    standardize: bool = False
    lambda_grid: Optional[list] = None


@dataclass
class FgamConfig:
    basis_size_q: int = 7
    basis_size_p: int = 7
    slice_levels: list = field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 0.9])


@dataclass
class GamConfig:
    basis_size: int = 6


@dataclass
class HistogramConfig:
    bins: int = 22
    lower: Optional[float] = None
    upper: Optional[float] = None
    preset: Optional[str] = None


@dataclass
class JiveConfig:
    joint_rank: Optional[int] = None
    individual_ranks: Optional[dict] = None
    n_perm: int = 100
    alpha: float = 0.05


@dataclass
class CvConfig:
    k: int = 10
    repeats: int = 100
    stratify: bool = True
    models: list = field(default_factory=lambda: ["soqfr"])
    permutation: bool = False
    threads: Optional[int] = None


@dataclass
class OutputConfig:
    directory: str = "results"


SECTIONS = {
    "data": DataConfig,
    "grid": GridConfig,
    "lmoments": LMomentConfig,
    "soqfr": SoqfrConfig,
    "fgam": FgamConfig,
    "gam": GamConfig,
    "histogram": HistogramConfig,
    "jive": JiveConfig,
    "cv": CvConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    """All analysis settings for one CLI run."""
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    lmoments: LMomentConfig = field(default_factory=LMomentConfig)
    soqfr: SoqfrConfig = field(default_factory=SoqfrConfig)
    fgam: FgamConfig = field(default_factory=FgamConfig)
    gam: GamConfig = field(default_factory=GamConfig)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    jive: JiveConfig = field(default_factory=JiveConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 42

    def to_flat(self) -> dict[str, Any]:
        """Dotted-key view, as written to run manifests."""
        flat = {"seed": self.seed}
        for name in SECTIONS:
            for key, value in asdict(getattr(self, name)).items():
                flat[f"{name}.{key}"] = value
        return flat

    def apply(self, settings: Mapping[str, Any]) -> "RunConfig":
        """Set dotted keys in place; ``None`` values are ignored."""
        for key, value in flatten(settings).items():
            if value is None:
                continue
            if key == "seed":
                self.seed = _coerce(key, value, 0)
                continue
            section, _, name = key.partition(".")
            if section not in SECTIONS or not name:
                raise ValidationError(f"unknown config key '{key}'")
            target = getattr(self, section)
            known = {f.name: f for f in fields(target)}
            if name not in known:
                raise ValidationError(f"unknown config key '{key}'")
            setattr(target, name, _coerce(key, value, getattr(SECTIONS[section](), name)))
        return self


def flatten(settings: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten nested mappings to dotted keys (``individual_ranks`` stays a dict)."""
    flat = {}
    for key, value in settings.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping) and dotted != "jive.individual_ranks":
            flat.update(flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _coerce(key: str, value: Any, default: Any) -> Any:
    if default is None or isinstance(value, type(default)):
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
            raise ValueError(value)
        if isinstance(default, list):
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return list(value)
        return type(default)(value)
    except (TypeError, ValueError):
        raise ValidationError(
            f"config key '{key}' expects {type(default).__name__}, got {value!r}"
        ) from None


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a JSON or YAML config file into dotted keys."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            content = json.loads(text)
        else:
            content = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"malformed config file {path}: {e}") from None
    if content is None:
        return {}
    if not isinstance(content, Mapping):
        raise ValidationError(f"config file {path} must hold a mapping of settings")
    return flatten(content)


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Build a RunConfig.

    Args:
        path: Optional JSON/YAML config file
        overrides: Dotted keys from command-line flags (``None`` means unset)

    Returns:
        RunConfig with defaults < file < environment < overrides applied
    """
    config = RunConfig()
    if path is not None:
        config.apply(read_config_file(path))
    if os.environ.get(THREADS_ENV):
        config.cv.threads = resolve_threads()
    if overrides:
        config.apply(overrides)
    return config
