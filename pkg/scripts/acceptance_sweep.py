#!/usr/bin/env python3
"""Replicate sweeps for the simulation-based acceptance checks.

Each check simulates (or plants) data under many seeds and reports the share
of replicates that pass. The suite in tests/ runs single small replicates of
the same checks; this script runs them at full scale.

    python scripts/acceptance_sweep.py --replicates 50 --output sweep.json
    python scripts/acceptance_sweep.py --only beta_recovery,rank_selection
"""

import argparse
import json
import time
import warnings
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

from qdist.jive import LMomentBlockMatrix, jive_decompose, select_ranks_permutation
from qdist.shared.errors import QdistWarning
from qdist.shared.runner import CvPlan, cross_validate
from qdist.simulate import ScenarioSpec, generate
from qdist.soqfr import FgamModel, HistogramModel, SoqfrModel

console = Console()

ALPHA = 0.05


def beta_recovery(seed: int) -> dict:
    """sin(2 pi p) coefficient, 500 subjects x 200 observations, SNR 4."""
    spec = ScenarioSpec(
        name="sin_curve", mechanism="beta_curve", curve="sin", distribution="beta",
        n_subjects=500, n_obs=(200, 200), snr=4.0, seed=seed,
    )
    dataset, truth = generate(spec)
    coef = SoqfrModel(spec.feature).fit(dataset).coefficient
    beta = np.asarray(truth["beta"])
    ise = float(np.mean((coef.estimate - beta) ** 2))
    norm = float(np.mean(beta ** 2))
    coverage = float(np.mean((coef.lower <= beta) & (beta <= coef.upper)))
    return {"relative_ise": ise / norm, "coverage": coverage, "passed": ise < 0.25 * norm}


def fgam_nonlinearity(seed: int) -> dict:
    """Quadratic surface: FGAM deviance explained beats SOQFR by 0.05."""
    spec = ScenarioSpec(
        name="quadratic_surface", mechanism="surface", surface="quadratic",
        scale_low=0.5, scale_high=1.0, n_subjects=300, n_obs=(100, 200), noise=0.5, seed=seed,
    )
    dataset, _ = generate(spec)
    fgam = FgamModel(spec.feature).fit(dataset).deviance_explained
    soqfr = SoqfrModel(spec.feature).fit(dataset).deviance_explained
    return {"fgam": fgam, "soqfr": soqfr, "passed": fgam - soqfr >= 0.05}


def histogram_contrast(seed: int, threads: int) -> dict:
    """Upper-tail binary outcome: SOQFR cvAUC at least the histogram model's."""
    spec = ScenarioSpec(
        name="upper_tail_binary", mechanism="beta_curve", curve="upper_tail",
        distribution="exponential", outcome="binary", loc_sd=0.5, scale_low=0.5,
        scale_high=2.0, effect=2.0, intercept=-1.0, n_subjects=300, n_obs=(100, 300), seed=seed,
    )
    dataset, _ = generate(spec)
    plan = CvPlan(k=5, repeats=5, seed=seed)
    soqfr = cross_validate(SoqfrModel(spec.feature), dataset, plan, threads=threads).mean
    hist = cross_validate(HistogramModel(spec.feature), dataset, plan, threads=threads).mean
    return {"soqfr_auc": soqfr, "hist_auc": hist, "passed": soqfr >= hist}


def _orthonormal(rng, n, k):
    q, _ = np.linalg.qr(np.column_stack([np.ones(n), rng.normal(size=(n, k))]))
    return q[:, 1:].T


def jive_exactness(seed: int) -> dict:
    """Noiseless rank-1 joint + rank-1 individual blocks with random loadings."""
    rng = np.random.default_rng(seed)
    n = 30
    v, w1, w2 = _orthonormal(rng, n, 3)
    blocks = LMomentBlockMatrix.from_matrices({
        "pace": np.outer(rng.normal(size=3), v) + np.outer(rng.normal(size=3), w1),
        "rhythm": np.outer(rng.normal(size=3), v) + np.outer(rng.normal(size=3), w2),
    })
    result = jive_decompose(blocks, 1, {"pace": 1, "rhythm": 1})
    error = max(
        np.linalg.norm(L - J - A) / np.linalg.norm(L)
        for L, J, A in zip(blocks.blocks, result.joint, result.individual)
    )
    orthogonality = max(np.linalg.norm(A @ result.joint_row_space) for A in result.individual)
    fraction_sums = [sum(parts.values()) for parts in result.variance_explained().values()]
    return {
        "relative_error": float(error),
        "orthogonality": float(orthogonality),
        "passed": error < 1e-6 and orthogonality < 1e-8
        and all(abs(s - 1.0) < 1e-9 for s in fraction_sums),
    }


def rank_selection(seed: int, threads: int) -> dict:
    """Joint rank 0 on pure noise and 1 on a planted shared factor."""
    rng = np.random.default_rng(seed)
    n = 40
    noise = LMomentBlockMatrix.from_matrices({d: rng.normal(size=(3, n)) for d in ("pace", "rhythm")})
    u = rng.normal(size=n)
    planted = LMomentBlockMatrix.from_matrices({
        d: np.outer(rng.uniform(1.0, 2.0, size=3), u) + 0.1 * rng.normal(size=(3, n))
        for d in ("pace", "rhythm")
    })
    null_rank = select_ranks_permutation(noise, n_perm=100, alpha=ALPHA, seed=seed, n_jobs=threads).joint_rank
    planted_rank = select_ranks_permutation(planted, n_perm=100, alpha=ALPHA, seed=seed, n_jobs=threads).joint_rank
    return {
        "false_positive": null_rank > 0,
        "recovered": planted_rank == 1,
        "passed": planted_rank == 1,
    }


def _summarize(name: str, results: list[dict]) -> dict:
    summary = {"check": name, "replicates": len(results), "pass_rate": float(np.mean([r["passed"] for r in results]))}
    if name == "beta_recovery":
        summary["target"] = "pass_rate >= 0.95, mean coverage >= 0.90"
        summary["mean_coverage"] = float(np.mean([r["coverage"] for r in results]))
        summary["ok"] = summary["pass_rate"] >= 0.95 and summary["mean_coverage"] >= 0.90
    elif name == "rank_selection":
        summary["target"] = f"false positives <= {2 * ALPHA:.2f}, recovery >= 0.90"
        summary["false_positive_rate"] = float(np.mean([r["false_positive"] for r in results]))
        summary["ok"] = summary["false_positive_rate"] <= 2 * ALPHA and summary["pass_rate"] >= 0.90
    elif name == "jive_exactness":
        summary["target"] = "every replicate"
        summary["ok"] = summary["pass_rate"] == 1.0
    else:
        summary["target"] = "pass_rate >= 0.90"
        summary["ok"] = summary["pass_rate"] >= 0.90
    return summary


CHECKS = {
    "beta_recovery": lambda seed, threads: beta_recovery(seed),
    "fgam_nonlinearity": lambda seed, threads: fgam_nonlinearity(seed),
    "histogram_contrast": histogram_contrast,
    "jive_exactness": lambda seed, threads: jive_exactness(seed),
    "rank_selection": rank_selection,
}


def main():
    parser = argparse.ArgumentParser(description="Run replicate acceptance sweeps")
    parser.add_argument("--replicates", type=int, default=50)
    parser.add_argument("--seed", type=int, default=1000, help="First replicate seed")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--only", default=None, help=f"Comma-separated subset of: {', '.join(CHECKS)}")
    parser.add_argument("--output", type=Path, default=None, help="Write per-replicate results as JSON")
    args = parser.parse_args()

    names = [n.strip() for n in args.only.split(",")] if args.only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        parser.error(f"unknown checks: {', '.join(unknown)}")

    warnings.simplefilter("ignore", QdistWarning)
    summaries, details = [], {}
    for name in names:
        console.print(f"[blue]{name}: {args.replicates} replicates[/blue]")
        start = time.perf_counter()
        results = [CHECKS[name](args.seed + r, args.threads) for r in range(args.replicates)]
        summary = _summarize(name, results)
        summary["seconds"] = round(time.perf_counter() - start, 1)
        summaries.append(summary)
        details[name] = results

    table = Table(title="Acceptance sweeps")
    for column in ("check", "replicates", "pass_rate", "target", "ok"):
        table.add_column(column)
    for s in summaries:
        colour = "green" if s["ok"] else "red"
        table.add_row(s["check"], str(s["replicates"]), f"{s['pass_rate']:.2f}", s["target"],
                      f"[{colour}]{s['ok']}[/{colour}]")
    console.print(table)

    if args.output:
        args.output.write_text(json.dumps({"summaries": summaries, "replicates": details}, indent=2, default=float))
        console.print(f"[green]Saved {args.output}[/green]")
    return 0 if all(s["ok"] for s in summaries) else 1


if __name__ == "__main__":
    raise SystemExit(main())
