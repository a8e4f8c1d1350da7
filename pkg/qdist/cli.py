"""qdist command-line interface."""

import argparse
import asyncio
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Optional

import aiofiles
import numpy as np
import pandas as pd
from rich.console import Console

from . import __version__
from .config import RunConfig, load_config
from .shared.errors import NumericalError, ValidationError

console = Console()

COMMANDS = (
    "quantiles", "lmoments", "fit-soqfr", "fit-fgam", "fit-soqfr-l",
    "fit-gam-l", "fit-hist", "jive", "cv", "simulate",
)

VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "joblib", "rich", "pyyaml", "aiofiles")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _rank_map(text: str) -> dict[str, int]:
    """``pace=1,rhythm=0`` -> {"pace": 1, "rhythm": 0}."""
    ranks = {}
    for item in text.split(","):
        domain, sep, value = item.partition("=")
        if not sep or not domain.strip():
            raise argparse.ArgumentTypeError(f"expected domain=rank pairs, got {text!r}")
        try:
            ranks[domain.strip()] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"rank for '{domain}' must be an integer") from None
    return ranks


def build_parser() -> argparse.ArgumentParser:
    # Flag destinations are the dotted config keys they override.
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or YAML config file with dotted keys")
    common.add_argument("--output", dest="output.directory", help="Output directory (default: results)")
    common.add_argument("--seed", type=int, dest="seed", help="Random seed (default: 42)")
    common.add_argument("--threads", type=int, dest="cv.threads", help="Parallel workers (default: QDIST_THREADS or CPU count)")

    data = _Parser(add_help=False)
    data.add_argument("--observations", dest="data.observations", help="CSV: subject_id,feature_id,value")
    data.add_argument("--subjects", dest="data.subjects", help="CSV: subject_id,outcome,<covariates...>")
    data.add_argument("--domains", dest="data.domains", help="CSV: feature_id,domain")
    data.add_argument("--feature", dest="data.feature", help="Feature to analyse")
    data.add_argument("--covariates", dest="data.covariates", help="Comma-separated covariate columns")
    data.add_argument("--resolution", type=int, dest="grid.resolution", help="Quantile grid size M (default: 100)")

    family = _Parser(add_help=False)
    family.add_argument("--family", dest="soqfr.family", choices=["gaussian", "binomial", "auto"],
                        help="Outcome family (default: binomial for 0/1 outcomes)")

    lmom = _Parser(add_help=False)
    lmom.add_argument("--order", type=int, dest="lmoments.order", help="Number of L-moments K (default: 4)")
    lmom.add_argument("--orders", type=_int_list, dest="lmoments.orders", help="Explicit L-moment orders, e.g. 2,5,6,8")
    lmom.add_argument("--method", dest="lmoments.method", choices=["projection", "sample"])

    parser = _Parser(
        prog="qdist",
        description="Distributional regression on repeated measures via quantile functions and L-moments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  qdist simulate scenarios/beta_curve/sin.yaml --output sim
  qdist fit-soqfr --observations sim/observations.csv --subjects sim/subjects.csv
  qdist cv --observations obs.csv --subjects subj.csv --models soqfr,hist --repeats 20
  qdist jive --observations obs.csv --subjects subj.csv --domains domains.csv
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sub.add_parser("quantiles", parents=[common, data], help="Per-subject quantile functions and group barycenters")
    sub.add_parser("lmoments", parents=[common, data, lmom], help="Per-subject L-moment table")

    p = sub.add_parser("fit-soqfr", parents=[common, data, family], help="Scalar-on-quantile-function regression")
    p.add_argument("--basis", dest="soqfr.basis", choices=["bspline", "legendre", "constant"])
    p.add_argument("--basis-size", type=int, dest="soqfr.basis_size")
    p.add_argument("--degree", type=int, dest="soqfr.degree")
    p.add_argument("--standardize", action="store_const", const=True, dest="soqfr.standardize",
                   help="Robust-standardize each quantile function first")
    p.add_argument("--lambda-grid", type=_float_list, dest="soqfr.lambda_grid")

    p = sub.add_parser("fit-fgam", parents=[common, data, family], help="Functional GAM on quantile functions")
    p.add_argument("--basis-size-q", type=int, dest="fgam.basis_size_q")
    p.add_argument("--basis-size-p", type=int, dest="fgam.basis_size_p")
    p.add_argument("--slice-levels", type=_float_list, dest="fgam.slice_levels")

    sub.add_parser("fit-soqfr-l", parents=[common, data, family, lmom], help="GLM on L-moments")

    p = sub.add_parser("fit-gam-l", parents=[common, data, family, lmom], help="GAM on L-moments")
    p.add_argument("--basis-size", type=int, dest="gam.basis_size")

    p = sub.add_parser("fit-hist", parents=[common, data, family], help="Histogram-predictor GLM")
    p.add_argument("--bins", type=int, dest="histogram.bins")
    p.add_argument("--lower", type=float, dest="histogram.lower")
    p.add_argument("--upper", type=float, dest="histogram.upper")
    p.add_argument("--preset", dest="histogram.preset", choices=["step-velocity"])

    p = sub.add_parser("jive", parents=[common, data, lmom], help="JIVE decomposition of L-moment blocks")
    p.add_argument("--joint-rank", type=int, dest="jive.joint_rank")
    p.add_argument("--individual-ranks", type=_rank_map, dest="jive.individual_ranks",
                   help="domain=rank pairs; omit both ranks to select by permutation")
    p.add_argument("--n-perm", type=int, dest="jive.n_perm")
    p.add_argument("--alpha", type=float, dest="jive.alpha")

    p = sub.add_parser("cv", parents=[common, data, family, lmom], help="Repeated k-fold cross-validation")
    p.add_argument("--models", dest="cv.models", help="Comma-separated: soqfr,fgam,soqfr-l,gam-l,hist,mean")
    p.add_argument("--k", type=int, dest="cv.k")
    p.add_argument("--repeats", type=int, dest="cv.repeats")
    p.add_argument("--no-stratify", action="store_const", const=False, dest="cv.stratify")
    p.add_argument("--permutation", action="store_const", const=True, dest="cv.permutation",
                   help="Also report permutation baselines")

    p = sub.add_parser("simulate", parents=[common], help="Simulate a dataset from a scenario preset")
    p.add_argument("scenario", type=Path, help="Scenario YAML file or directory of presets")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items() if k == "seed" or "." in k}
        config = load_config(args.config, overrides)
        asyncio.run(run_command(args.command, config, args))
    except ValidationError as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_VALIDATION
    except OSError as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as e:
        console.print(f"[red]Numerical failure: {e}[/red]")
        return EXIT_NUMERICAL
    return EXIT_OK


async def run_command(command: str, config: RunConfig, args: argparse.Namespace) -> dict[str, Path]:
    """Run one subcommand and write its run manifest."""
    handlers = {
        "quantiles": run_quantiles_cmd,
        "lmoments": run_lmoments_cmd,
        "fit-soqfr": run_fit_cmd,
        "fit-fgam": run_fit_cmd,
        "fit-soqfr-l": run_fit_cmd,
        "fit-gam-l": run_fit_cmd,
        "fit-hist": run_fit_cmd,
        "jive": run_jive_cmd,
        "cv": run_cv_cmd,
        "simulate": run_simulate_cmd,
    }
    output_dir = Path(config.output.directory)
    timings: dict[str, float] = {}
    extra: dict[str, Any] = {}
    start = time.perf_counter()
    outputs = await handlers[command](command, config, args, output_dir, timings, extra)
    timings["total"] = time.perf_counter() - start

    manifest = output_dir / "run_manifest.json"
    await write_json(manifest, {
        "command": command,
        "config": config.to_flat(),
        "seed": config.seed,
        "versions": package_versions(),
        "outputs": {name: str(path) for name, path in sorted(outputs.items())},
        "timings": {k: round(v, 6) for k, v in timings.items()},
        **extra,
    })
    console.print(f"\n[green]Results saved to {output_dir}[/green]")
    return {**outputs, "manifest": manifest}


def package_versions() -> dict[str, str]:
    versions = {"qdist": __version__, "python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


# --- Writers --------------------------------------------------------------------


async def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


async def write_csv(path: Path, rows: list[dict], columns: Optional[list[str]] = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=columns)
    text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(text)
    return path


# --- Data and model plumbing -------------------------------------------------------


def load_input(config: RunConfig, timings: dict[str, float], need_domains: bool = False):
    """Load the dataset named by the config; every file is checked before any computation."""
    from .shared.datasets import load_dataset

    data = config.data
    missing = [flag for flag, value in (("--observations", data.observations), ("--subjects", data.subjects))
               if not value]
    if need_domains and not data.domains:
        missing.append("--domains")
    if missing:
        raise ValidationError(f"missing required input: {', '.join(missing)}")
    start = time.perf_counter()
    dataset = load_dataset(
        Path(data.observations), Path(data.subjects), Path(data.domains) if data.domains else None
    )
    timings["load"] = time.perf_counter() - start
    console.print(f"[blue]Loaded {len(dataset)} subjects, {len(dataset.features)} features[/blue]")
    return dataset


def resolve_feature(config: RunConfig, dataset) -> str:
    if config.data.feature:
        if config.data.feature not in dataset.features:
            raise ValidationError(f"feature '{config.data.feature}' not found in observations")
        return config.data.feature
    if len(dataset.features) == 1:
        return dataset.features[0]
    raise ValidationError(
        f"dataset has {len(dataset.features)} features; choose one with --feature"
    )


def histogram_bins(config: RunConfig):
    from .soqfr import STEP_VELOCITY_BINS, BinSpec

    h = config.histogram
    if h.preset == "step-velocity":
        return STEP_VELOCITY_BINS
    if h.preset is not None:
        raise ValidationError(f"unknown histogram preset '{h.preset}'")
    return BinSpec(n_bins=h.bins, lower=h.lower, upper=h.upper)


def model_options(name: str, config: RunConfig) -> dict[str, Any]:
    """Recipe keyword arguments for ``name`` drawn from the config."""
    lm = config.lmoments
    resolution = config.grid.resolution
    orders = tuple(int(r) for r in lm.orders) if lm.orders else None
    if name == "soqfr":
        s = config.soqfr
        return {
            "basis": s.basis,
            "n_basis": s.basis_size,
            "degree": s.degree,
            "resolution": resolution,
            "standardize": s.standardize,
            "lambda_grid": tuple(float(v) for v in s.lambda_grid) if s.lambda_grid else None,
        }
    if name == "fgam":
        return {"n_basis_q": config.fgam.basis_size_q, "n_basis_p": config.fgam.basis_size_p, "resolution": resolution}
    if name == "soqfr-l":
        return {"K": lm.order, "orders": orders, "method": lm.method, "resolution": resolution}
    if name == "gam-l":
        return {"K": lm.order, "orders": orders, "method": lm.method,
                "n_basis": config.gam.basis_size, "resolution": resolution}
    if name == "hist":
        return {"bins": histogram_bins(config)}
    if name == "mean":
        return {"resolution": resolution}
    raise ValidationError(f"unknown model '{name}'")


def make_recipe(name: str, config: RunConfig, dataset):
    from .soqfr import make_model

    return make_model(
        name,
        resolve_feature(config, dataset),
        config.data.covariates,
        config.soqfr.family,
        **model_options(name, config),
    )


# --- Commands ----------------------------------------------------------------------


async def run_quantiles_cmd(command, config, args, output_dir, timings, extra):
    """Quantile functions per subject and feature, plus outcome-group barycenters."""
    from .shared.quantiles import QuantileGrid, estimate_quantile_functions, group_barycenters

    dataset = load_input(config, timings)
    grid = QuantileGrid.midpoint(config.grid.resolution)
    features = [resolve_feature(config, dataset)] if config.data.feature else dataset.features

    start = time.perf_counter()
    rows, centers = [], []
    for feature in features:
        for sid, qf in estimate_quantile_functions(dataset, feature, grid).items():
            rows.extend(
                {"subject_id": sid, "feature_id": feature, "p": float(p), "value": float(v)}
                for p, v in zip(grid.levels, qf.values)
            )
        for group, qf in group_barycenters(dataset, feature, grid).items():
            centers.extend(
                {"group": group, "feature_id": feature, "p": float(p), "value": float(v)}
                for p, v in zip(grid.levels, qf.values)
            )
    timings["compute"] = time.perf_counter() - start

    return {
        "quantiles": await write_csv(output_dir / "quantiles.csv", rows, ["subject_id", "feature_id", "p", "value"]),
        "barycenters": await write_csv(output_dir / "barycenters.csv", centers, ["group", "feature_id", "p", "value"]),
    }


async def run_lmoments_cmd(command, config, args, output_dir, timings, extra):
    from .shared.lmoments import lmoment_table
    from .shared.quantiles import QuantileGrid

    dataset = load_input(config, timings)
    grid = QuantileGrid.midpoint(config.grid.resolution)
    features = [resolve_feature(config, dataset)] if config.data.feature else dataset.features
    K = config.lmoments.order

    start = time.perf_counter()
    rows = lmoment_table(dataset, features, grid, K, config.lmoments.method)
    timings["compute"] = time.perf_counter() - start
    columns = ["subject_id", "feature_id"] + [f"L{r}" for r in range(1, K + 1)]
    return {"lmoments": await write_csv(output_dir / "lmoments.csv", rows, columns)}


_FIT_MODELS = {
    "fit-soqfr": "soqfr",
    "fit-fgam": "fgam",
    "fit-soqfr-l": "soqfr-l",
    "fit-gam-l": "gam-l",
    "fit-hist": "hist",
}


async def run_fit_cmd(command, config, args, output_dir, timings, extra):
    """Fit one model on the full dataset; write its JSON summary and plot-ready curves."""
    dataset = load_input(config, timings)
    recipe = make_recipe(_FIT_MODELS[command], config, dataset)

    start = time.perf_counter()
    fitted = recipe.fit(dataset)
    timings["fit"] = time.perf_counter() - start
    console.print(
        f"[bold]{recipe.name}[/bold]: deviance explained {fitted.deviance_explained:.4f}, "
        f"edf {fitted.fit.edf:.2f}"
    )

    stem = recipe.name.replace("-", "_")
    outputs = {"summary": await write_json(output_dir / f"{stem}.json", fitted.to_dict())}
    if command in ("fit-soqfr", "fit-soqfr-l"):
        outputs["beta"] = await write_csv(output_dir / "beta.csv", fitted.coefficient.rows())
    if command == "fit-soqfr-l":
        outputs["wald"] = await write_csv(output_dir / "wald.csv", fitted.wald_table())
    if command == "fit-fgam":
        outputs["surface"] = await write_csv(output_dir / "surface.csv", fitted.surface.rows())
        slices = fitted.surface.slice_at(tuple(float(v) for v in config.fgam.slice_levels))
        outputs["slices"] = await write_csv(output_dir / "surface_slices.csv", [
            {"p": p, "q": float(q), "value": float(v)}
            for p, values in slices.items()
            for q, v in zip(fitted.surface.q_grid, values)
        ])
    if command == "fit-gam-l":
        rows = []
        for term in fitted.terms:
            rows.extend({"term": term.name, **row} for row in fitted.smooth(term.name).rows())
        outputs["smooths"] = await write_csv(output_dir / "smooths.csv", rows)
    if command == "fit-hist":
        outputs["effect"] = await write_csv(output_dir / "f_x.csv", fitted.effect.rows())
    return outputs


async def run_jive_cmd(command, config, args, output_dir, timings, extra):
    from .jive import (
        build_blocks,
        jive_decompose,
        normalize_blocks,
        score_cross_correlation,
        select_ranks_permutation,
    )
    from .shared.quantiles import QuantileGrid
    from .shared.runner import resolve_threads

    dataset = load_input(config, timings, need_domains=True)
    grid = QuantileGrid.midpoint(config.grid.resolution)
    j = config.jive

    start = time.perf_counter()
    blocks = normalize_blocks(
        build_blocks(dataset, grid, config.lmoments.order, config.lmoments.method),
        dataset.subject_ids,
    )
    outputs = {}
    if j.joint_rank is None and j.individual_ranks is None:
        console.print(f"[blue]Selecting ranks with {j.n_perm} permutations[/blue]")
        selection = select_ranks_permutation(
            blocks, j.n_perm, j.alpha, config.seed, n_jobs=resolve_threads(config.cv.threads)
        )
        joint_rank, individual_ranks = selection.joint_rank, selection.individual_ranks
        outputs["ranks"] = await write_json(output_dir / "ranks.json", selection.to_dict())
    elif j.joint_rank is None or j.individual_ranks is None:
        raise ValidationError("give both --joint-rank and --individual-ranks, or neither")
    else:
        joint_rank, individual_ranks = j.joint_rank, j.individual_ranks
    decomposition = jive_decompose(blocks, joint_rank, individual_ranks)
    correlations = score_cross_correlation(decomposition)
    timings["compute"] = time.perf_counter() - start

    console.print(
        f"[bold]JIVE[/bold]: joint rank {decomposition.joint_rank}, "
        f"individual ranks {dict(decomposition.individual_ranks)}"
    )
    outputs["summary"] = await write_json(output_dir / "jive.json", decomposition.summary())
    outputs["scores"] = await write_csv(
        output_dir / "scores.csv", decomposition.score_rows(), ["subject_id", "score_name", "value"]
    )
    outputs["loadings"] = await write_csv(
        output_dir / "loadings.csv", decomposition.loading_rows(), ["domain", "row", "component", "value"]
    )
    outputs["correlations"] = await write_csv(
        output_dir / "correlations.csv", correlations,
        ["score", "domain", "row", "correlation", "zero_variance"],
    )
    return outputs


async def run_cv_cmd(command, config, args, output_dir, timings, extra):
    from .shared.metrics import REPORT_COLUMNS, compare_reports, report_rows
    from .shared.runner import CvPlan, compare_models_async

    dataset = load_input(config, timings)
    c = config.cv
    if not c.models:
        raise ValidationError("no models to cross-validate")
    recipes = [make_recipe(name, config, dataset) for name in c.models]
    plan = CvPlan(k=c.k, repeats=c.repeats, seed=config.seed, stratify=c.stratify)

    start = time.perf_counter()
    reports = await compare_models_async(
        recipes, dataset, plan, permutation=c.permutation, threads=c.threads, show_progress=True
    )
    timings["cv"] = time.perf_counter() - start

    for report in reports:
        console.print(f"  {report.model:<20} {report.metric} {report.mean:.4f} (sd {report.sd:.4f})")
    observed = [r for r in reports if not r.model.endswith("-permuted")]
    comparisons = [compare_reports(observed[0], other) for other in observed[1:]]
    return {
        "report": await write_csv(output_dir / "cv_report.csv", report_rows(reports), list(REPORT_COLUMNS)),
        "details": await write_json(output_dir / "cv_report.json", {
            "reports": [r.to_dict() for r in reports],
            "comparisons": comparisons,
        }),
    }


async def run_simulate_cmd(command, config, args, output_dir, timings, extra):
    """Simulate one scenario (file) or every preset under a directory."""
    from .simulate import generate, load_scenario, load_scenarios_from_dir, write_dataset

    path = Path(args.scenario)
    if path.is_dir():
        scenarios = await load_scenarios_from_dir(path)
        if not scenarios:
            raise ValidationError(f"no scenarios found in {path}")
        targets = [(s, output_dir / s.name) for s in scenarios]
    else:
        scenario = await load_scenario(path)
        targets = [(scenario, output_dir)]

    outputs = {}
    start = time.perf_counter()
    extra["scenario_seeds"] = {}
    for scenario, directory in targets:
        if getattr(args, "seed", None) is not None:
            scenario.seed = args.seed
        extra["scenario_seeds"][scenario.name] = scenario.seed
        dataset, truth = generate(scenario)
        written = await write_dataset(dataset, truth, directory)
        prefix = "" if len(targets) == 1 else f"{scenario.name}."
        outputs.update({f"{prefix}{k}": v for k, v in written.items()})
        console.print(f"[blue]Simulated {scenario.name}: {len(dataset)} subjects ({scenario.mechanism})[/blue]")
    timings["simulate"] = time.perf_counter() - start
    return outputs


if __name__ == "__main__":
    sys.exit(main())
