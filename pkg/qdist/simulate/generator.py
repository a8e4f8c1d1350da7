"""
Synthetic repeated-measures data with planted distributional effects.

Each subject has a population distribution (normal, exponential, uniform or
beta family with subject-level parameters). Outcomes are computed from the
subject's true quantile function or L-moments, never from the sampled
observations, and the ground truth is returned alongside the dataset.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import aiofiles
import numpy as np
import yaml
from rich.console import Console
from scipy import stats
from scipy.special import expit

from ..shared.datasets import RepeatedMeasuresDataset, SubjectRecord
from ..shared.datasets import write_dataset as write_tables
from ..shared.errors import ValidationError
from ..shared.lmoments import legendre_table
from ..shared.quantiles import QuantileGrid

console = Console()

DISTRIBUTIONS = ("normal", "exponential", "uniform", "beta")
MECHANISMS = ("constant_beta", "beta_curve", "lmoment_linear", "surface", "jive")
CURVES = ("sin", "linear", "upper_tail")
SURFACES = ("linear", "quadratic")
OUTCOMES = ("gaussian", "binary")

# Integrals over the true quantile functions use this many midpoint levels.
TRUTH_RESOLUTION = 2000

# Random streams per subject.
_PARAMS, _OBSERVATIONS, _NOISE, _COVARIATES, _FACTORS = range(5)


def beta_curve(name: str, p) -> np.ndarray:
    """Named coefficient functions on [0, 1]."""
    p = np.asarray(p, dtype=float)
    if name == "sin":
        return np.sin(2 * np.pi * p)
    if name == "linear":
        return 2.0 * p - 1.0
    if name == "upper_tail":
        return 8.0 * np.clip(p - 0.75, 0.0, None)
    raise ValidationError(f"unknown curve '{name}'; use one of {', '.join(CURVES)}")


def surface_function(name: str, q, p) -> np.ndarray:
    """Named surfaces F(q, p); ``linear`` is q (2p - 1), ``quadratic`` is q^2."""
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    if name == "linear":
        return q * beta_curve("linear", p)
    if name == "quadratic":
        return q * q
    raise ValidationError(f"unknown surface '{name}'; use one of {', '.join(SURFACES)}")


@dataclass
class ScenarioSpec:
    """Simulation settings; every draw is determined by ``seed``."""
    name: str = "scenario"
    description: str = ""
    n_subjects: int = 100
    n_obs: tuple[int, int] = (50, 200)
    distribution: str = "normal"
    # location ~ N(loc_mean, loc_sd); scale ~ U(scale_low, scale_high)
    loc_mean: float = 0.0
    loc_sd: float = 1.0
    scale_low: float = 0.5
    scale_high: float = 1.5
    # beta family shapes ~ U(shape_low, shape_high)
    shape_low: float = 1.0
    shape_high: float = 5.0
    mechanism: str = "beta_curve"
    outcome: str = "gaussian"
    intercept: float = 0.0
    effect: float = 1.0
    beta0: float = 1.0
    curve: str = "sin"
    surface: str = "quadratic"
    coefficients: list = field(default_factory=lambda: [0.0, 2.0])
    domains: dict = field(default_factory=lambda: {"pace": 3, "rhythm": 3})
    noise: float = 1.0
    snr: Optional[float] = None
    covariates: list = field(default_factory=list)
    covariate_effect: float = 0.5
    feature: str = "x"
    seed: int = 42

    def __post_init__(self):
        self.n_obs = tuple(int(v) for v in self.n_obs)
        if self.n_subjects < 1:
            raise ValidationError(f"n_subjects must be >= 1, got {self.n_subjects}")
        if len(self.n_obs) != 2 or not 1 <= self.n_obs[0] <= self.n_obs[1]:
            raise ValidationError(f"n_obs must be a range [min, max] with 1 <= min <= max, got {self.n_obs}")
        for key, allowed in (
            ("distribution", DISTRIBUTIONS),
            ("mechanism", MECHANISMS),
            ("outcome", OUTCOMES),
        ):
            if getattr(self, key) not in allowed:
                raise ValidationError(f"unknown {key} '{getattr(self, key)}'; use one of {', '.join(allowed)}")
        if self.loc_sd < 0:
            raise ValidationError(f"loc_sd must be nonnegative, got {self.loc_sd}")
        if not 0 < self.scale_low <= self.scale_high:
            raise ValidationError(
                f"scale law needs 0 < scale_low <= scale_high, got [{self.scale_low}, {self.scale_high}]"
            )
        if self.distribution == "beta" and not 0 < self.shape_low <= self.shape_high:
            raise ValidationError(
                f"beta shapes need 0 < shape_low <= shape_high, got [{self.shape_low}, {self.shape_high}]"
            )
        if self.noise < 0 or (self.snr is not None and self.snr <= 0):
            raise ValidationError("noise must be nonnegative and snr positive")
        if self.mechanism == "beta_curve":
            beta_curve(self.curve, 0.5)
        if self.mechanism == "surface":
            surface_function(self.surface, 0.0, 0.5)
        if self.mechanism == "lmoment_linear" and not self.coefficients:
            raise ValidationError("lmoment_linear needs at least one coefficient")
        if self.mechanism == "jive" and (not self.domains or min(self.domains.values()) < 1):
            raise ValidationError("jive mechanism needs domains with at least one feature each")

    @classmethod
    def from_dict(cls, content: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(content) - known)
        if unknown:
            raise ValidationError(f"unknown scenario keys: {', '.join(unknown)}")
        return cls(**content)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_obs"] = list(self.n_obs)
        return out


def _stream(seed: int, subject: int, stream: int) -> np.random.Generator:
    # Philox is counter-based; keying by (seed, subject, stream) makes every
    # subject's draws independent of generation order.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, subject, stream])))


@dataclass(frozen=True)
class SubjectLaw:
    """Population distribution of one subject-feature."""
    distribution: str
    loc: float
    scale: float
    a: float = 1.0
    b: float = 1.0

    def quantile(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.distribution == "normal":
            return self.loc + self.scale * stats.norm.ppf(p)
        if self.distribution == "exponential":
            return self.loc - self.scale * np.log1p(-p)
        if self.distribution == "uniform":
            return self.loc + self.scale * p
        return self.loc + self.scale * stats.beta.ppf(p, self.a, self.b)

    @property
    def mean(self) -> float:
        if self.distribution == "normal":
            return self.loc
        if self.distribution == "exponential":
            return self.loc + self.scale
        if self.distribution == "uniform":
            return self.loc + 0.5 * self.scale
        return self.loc + self.scale * self.a / (self.a + self.b)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # inverse-transform sampling keeps one draw per observation index
        return self.quantile(rng.uniform(size=n))


def _draw_law(spec: ScenarioSpec, rng: np.random.Generator, loc: Optional[float] = None) -> SubjectLaw:
    drawn_loc = rng.normal(spec.loc_mean, spec.loc_sd)
    scale = rng.uniform(spec.scale_low, spec.scale_high)
    a = rng.uniform(spec.shape_low, spec.shape_high)
    b = rng.uniform(spec.shape_low, spec.shape_high)
    return SubjectLaw(spec.distribution, drawn_loc if loc is None else loc, scale, a, b)


def _signal(spec: ScenarioSpec, law: SubjectLaw, truth_grid: QuantileGrid) -> float:
    w = truth_grid.cell_weights
    p = truth_grid.levels
    if spec.mechanism == "constant_beta":
        return spec.beta0 * law.mean
    Q = law.quantile(p)
    if spec.mechanism == "beta_curve":
        return float((Q * beta_curve(spec.curve, p)) @ w)
    if spec.mechanism == "surface":
        return float(surface_function(spec.surface, Q, p) @ w)
    K = len(spec.coefficients)
    L = legendre_table(truth_grid, K) @ (w * Q)
    return float(np.dot(spec.coefficients, L))


def generate(spec: ScenarioSpec) -> tuple[RepeatedMeasuresDataset, dict]:
    """
    Draw a dataset from ``spec``.

    Returns:
        (dataset, truth) where truth records the true coefficient function on
        the default grid, subject means, signals and planted factors
    """
    truth_grid = QuantileGrid.midpoint(TRUTH_RESOLUTION)
    n = spec.n_subjects
    lo, hi = spec.n_obs

    observations: list[dict[str, np.ndarray]] = []
    signals = np.zeros(n)
    means: dict[str, list[float]] = {}
    truth: dict = {"scenario": spec.to_dict(), "mechanism": spec.mechanism}

    if spec.mechanism == "jive":
        factors = _jive_factors(spec)
        truth["jive"] = {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in factors.items()}

    for i in range(n):
        params_rng = _stream(spec.seed, i, _PARAMS)
        obs_rng = _stream(spec.seed, i, _OBSERVATIONS)
        n_i = int(obs_rng.integers(lo, hi + 1))
        if spec.mechanism == "jive":
            subject_obs = {}
            for feature, loc in _jive_locations(spec, factors, i).items():
                law = _draw_law(spec, params_rng, loc=loc)
                subject_obs[feature] = law.sample(obs_rng, n_i)
                means.setdefault(feature, []).append(law.mean)
            signals[i] = factors["joint"][i]
        else:
            law = _draw_law(spec, params_rng)
            subject_obs = {spec.feature: law.sample(obs_rng, n_i)}
            means.setdefault(spec.feature, []).append(law.mean)
            signals[i] = _signal(spec, law, truth_grid)
        observations.append(subject_obs)

    signals = spec.effect * signals
    Z = np.stack([
        _stream(spec.seed, i, _COVARIATES).normal(size=len(spec.covariates)) for i in range(n)
    ]) if spec.covariates else np.zeros((n, 0))
    eta = spec.intercept + signals + spec.covariate_effect * Z.sum(axis=1)

    noise_sd = spec.noise
    if spec.snr is not None:
        noise_sd = float(np.std(signals) / np.sqrt(spec.snr))
    if spec.outcome == "gaussian":
        eps = np.array([_stream(spec.seed, i, _NOISE).normal() for i in range(n)])
        y = eta + noise_sd * eps
    else:
        u = np.array([_stream(spec.seed, i, _NOISE).uniform() for i in range(n)])
        y = (u < expit(eta)).astype(float)

    width = len(str(n - 1))
    subjects = tuple(
        SubjectRecord(
            subject_id=f"s{i:0{width}d}",
            outcome=float(y[i]),
            covariates={name: float(Z[i, j]) for j, name in enumerate(spec.covariates)},
            observations=observations[i],
        )
        for i in range(n)
    )
    domains = {}
    if spec.mechanism == "jive":
        domains = {f: d for d, count in spec.domains.items() for f in _domain_features(d, count)}
    dataset = RepeatedMeasuresDataset(subjects=subjects, domains=domains)

    levels = QuantileGrid.midpoint().levels
    truth.update({
        "intercept": spec.intercept,
        "effect": spec.effect,
        "noise_sd": noise_sd,
        "signal": signals.tolist(),
        "subject_means": {f: v for f, v in means.items()},
        "levels": levels.tolist(),
    })
    if spec.mechanism == "constant_beta":
        truth["beta"] = (spec.effect * spec.beta0 * np.ones_like(levels)).tolist()
    elif spec.mechanism == "beta_curve":
        truth["beta"] = (spec.effect * beta_curve(spec.curve, levels)).tolist()
    elif spec.mechanism == "lmoment_linear":
        coef = spec.effect * np.asarray(spec.coefficients, dtype=float)
        truth["coefficients"] = coef.tolist()
        truth["beta"] = (coef @ legendre_table(QuantileGrid.midpoint(), coef.size)).tolist()
    return dataset, truth


def _domain_features(domain: str, count: int) -> list[str]:
    return [f"{domain}_{j + 1}" for j in range(count)]


def _jive_factors(spec: ScenarioSpec) -> dict:
    """Joint factor u, one individual factor per domain and the feature loadings."""
    n = spec.n_subjects
    rng = _stream(spec.seed, 0, _FACTORS)
    factors: dict = {"joint": rng.normal(size=n)}
    for d, count in spec.domains.items():
        factors[f"individual_{d}"] = rng.normal(size=n)
        # Features alternate between loading on the joint and the individual factor.
        factors[f"joint_loadings_{d}"] = [1.0 if j % 2 == 0 else 0.0 for j in range(count)]
        factors[f"individual_loadings_{d}"] = [0.0 if j % 2 == 0 else 1.0 for j in range(count)]
    return factors


def _jive_locations(spec: ScenarioSpec, factors: dict, i: int) -> dict[str, float]:
    locs = {}
    for d, count in spec.domains.items():
        for j, feature in enumerate(_domain_features(d, count)):
            locs[feature] = spec.loc_mean + spec.loc_sd * (
                factors[f"joint_loadings_{d}"][j] * factors["joint"][i]
                + factors[f"individual_loadings_{d}"][j] * factors[f"individual_{d}"][i]
            )
    return locs


async def write_dataset(dataset: RepeatedMeasuresDataset, truth: dict, directory: Path) -> dict[str, Path]:
    """Write the dataset CSVs plus ``truth.json``."""
    paths = write_tables(dataset, directory)
    paths["truth"] = Path(directory) / "truth.json"
    async with aiofiles.open(paths["truth"], "w", encoding="utf-8") as f:
        await f.write(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return paths


async def load_scenario(path: Path) -> ScenarioSpec:
    """Load a ScenarioSpec from a YAML file (async)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"scenario file not found: {path}")
    async with aiofiles.open(path, encoding="utf-8") as f:
        content = await f.read()
    try:
        data = yaml.safe_load(content)
    except yaml.YAMLError as e:
        raise ValidationError(f"malformed scenario file {path}: {e}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"scenario file {path} must hold a mapping")
    return ScenarioSpec.from_dict(data)


async def load_scenarios_from_dir(dir_path: Path) -> list[ScenarioSpec]:
    """Load all scenarios under a directory (async)."""
    scenarios = []
    for path in sorted(Path(dir_path).glob("**/*.yaml")):
        if path.name.startswith("_"):
            continue
        try:
            scenarios.append(await load_scenario(path))
        except ValidationError as e:
            console.print(f"[yellow]Warning: Failed to load {path}: {e}[/yellow]")
    return scenarios
