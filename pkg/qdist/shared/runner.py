"""Repeated k-fold cross-validation orchestration."""

import asyncio
import os
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.progress import Progress

from .datasets import RepeatedMeasuresDataset
from .errors import QdistError, ValidationError
from .metrics import MetricReport, auc, cv_r2

console = Console()

THREADS_ENV = "QDIST_THREADS"

# A repeat is discarded when more than this share of its folds fail to fit.
MAX_FAILED_FOLD_SHARE = 0.10


def resolve_threads(value: Optional[int] = None) -> int:
    """Explicit value, else QDIST_THREADS, else the CPU count."""
    if value is not None:
        threads = value
    elif os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ValidationError(
                f"{THREADS_ENV} must be an integer, got {os.environ[THREADS_ENV]!r}"
            ) from None
    else:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValidationError(f"thread count must be >= 1, got {threads}")
    return threads


@dataclass(frozen=True)
class CvPlan:
    """k folds repeated B times, seeded; binary outcomes stratified by class."""
    k: int = 10
    repeats: int = 100
    seed: int = 42
    stratify: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"need at least 2 folds, got {self.k}")
        if self.repeats < 1:
            raise ValidationError(f"need at least 1 repeat, got {self.repeats}")


def _rng(seed: int, repeat: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, repeat, stream]))


def make_folds(outcomes, plan: CvPlan, repeat: int) -> list[np.ndarray]:
    """
    Test-fold indices for one repeat.

    Binary outcomes with ``plan.stratify`` deal each class round-robin over
    the folds after shuffling, so class shares stay close to the overall
    share; otherwise the shuffled subjects are split into k near-equal folds.
    """
    y = np.asarray(outcomes, dtype=float).ravel()
    n = y.size
    if plan.k > n:
        raise ValidationError(f"cannot make {plan.k} folds from {n} subjects")
    rng = _rng(plan.seed, repeat)
    binary = np.all((y == 0) | (y == 1))

    if plan.stratify and binary:
        assignment = np.empty(n, dtype=int)
        offset = 0
        for cls in (0.0, 1.0):
            members = rng.permutation(np.flatnonzero(y == cls))
            assignment[members] = (offset + np.arange(members.size)) % plan.k
            offset += members.size
        folds = [np.flatnonzero(assignment == f) for f in range(plan.k)]
    else:
        folds = [np.sort(f) for f in np.array_split(rng.permutation(n), plan.k)]

    if binary:
        for f, test in enumerate(folds):
            train = np.setdiff1d(np.arange(n), test)
            if np.unique(y[train]).size < 2:
                raise ValidationError(
                    f"repeat {repeat} fold {f}: training fold lacks one of the outcome classes"
                )
    return folds


@dataclass
class FoldResult:
    """Test-fold predictions of one (repeat, fold) fit."""
    repeat: int
    fold: int
    test_index: np.ndarray
    predictions: Optional[np.ndarray] = None
    baseline: float = float("nan")
    error: Optional[str] = None
    fitted: object = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _run_fold(recipe, dataset, y, train, test, repeat, fold, keep_fitted) -> FoldResult:
    train_set = dataset.take(train).with_outcomes(y[train])
    test_set = dataset.take(test)
    try:
        fitted = recipe.fit(train_set)
        predictions = fitted.predict(test_set)
    except (QdistError, np.linalg.LinAlgError) as e:
        return FoldResult(repeat, fold, test, error=f"{type(e).__name__}: {e}")
    return FoldResult(
        repeat, fold, test,
        predictions=np.asarray(predictions, dtype=float),
        baseline=float(y[train].mean()),
        fitted=fitted if keep_fitted else None,
    )


def _repeat_outcomes(dataset: RepeatedMeasuresDataset, plan: CvPlan, repeat: int, permute: bool):
    y = dataset.outcomes()
    if permute:
        y = _rng(plan.seed, repeat, stream=1).permutation(y)
    return y


async def cross_validate_async(
    recipe,
    dataset: RepeatedMeasuresDataset,
    plan: CvPlan,
    metric: Optional[str] = None,
    on_fold_fit: Optional[Callable[[int, int, object], None]] = None,
    permute: bool = False,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> MetricReport:
    """
    Cross-validate a model recipe.

    Every fold refits the recipe on its training subjects only, so all
    distributional preprocessing comes from the training fold. Fold fits run
    in worker threads and are collected by (repeat, fold), not by completion
    order.

    Args:
        recipe: Object with ``fit(dataset)`` returning a model with ``predict``
        dataset: Full dataset
        plan: Folds, repeats and seed
        metric: "cvAUC" or "cvR2" (default by outcome type)
        on_fold_fit: Called as (repeat, fold, fitted model) in (repeat, fold) order
        permute: Permute outcomes within each repeat (null reference)
        threads: Concurrent fold fits (default QDIST_THREADS or CPU count)
        show_progress: Show a progress bar

    Returns:
        MetricReport with one value per repeat (NaN for invalid repeats)
    """
    if metric is None:
        metric = "cvAUC" if dataset.outcome_type == "binary" else "cvR2"
    if metric not in ("cvAUC", "cvR2"):
        raise ValidationError(f"cross-validation metric must be cvAUC or cvR2, got '{metric}'")

    outcomes = {r: _repeat_outcomes(dataset, plan, r, permute) for r in range(plan.repeats)}
    folds = {r: make_folds(outcomes[r], plan, r) for r in range(plan.repeats)}
    n = len(dataset)
    semaphore = asyncio.Semaphore(resolve_threads(threads))

    async def run(repeat: int, fold: int) -> FoldResult:
        test = folds[repeat][fold]
        train = np.setdiff1d(np.arange(n), test)
        async with semaphore:
            return await asyncio.to_thread(
                _run_fold, recipe, dataset, outcomes[repeat], train, test,
                repeat, fold, on_fold_fit is not None,
            )

    keys = [(r, f) for r in range(plan.repeats) for f in range(plan.k)]
    results: dict[tuple[int, int], FoldResult] = {}
    if show_progress:
        with Progress(console=console) as progress:
            task = progress.add_task(f"CV {getattr(recipe, 'name', '')}", total=len(keys))
            for coro in asyncio.as_completed([run(r, f) for r, f in keys]):
                res = await coro
                results[(res.repeat, res.fold)] = res
                progress.advance(task)
    else:
        for res in await asyncio.gather(*(run(r, f) for r, f in keys)):
            results[(res.repeat, res.fold)] = res

    values, failed_folds, invalid, errors = [], 0, 0, []
    for r in range(plan.repeats):
        fold_results = [results[(r, f)] for f in range(plan.k)]
        failed = [res for res in fold_results if res.failed]
        failed_folds += len(failed)
        errors.extend(res.error for res in failed[:1])
        if len(failed) > MAX_FAILED_FOLD_SHARE * plan.k:
            values.append(float("nan"))
            invalid += 1
            continue
        ok = [res for res in fold_results if not res.failed]
        idx = np.concatenate([res.test_index for res in ok])
        pred = np.concatenate([res.predictions for res in ok])
        base = np.concatenate([np.full(res.test_index.size, res.baseline) for res in ok])
        y = outcomes[r][idx]
        try:
            value = auc(pred, y) if metric == "cvAUC" else cv_r2(pred, y, base)
        except ValidationError as e:
            errors.append(str(e))
            values.append(float("nan"))
            invalid += 1
            continue
        values.append(value)

    if on_fold_fit is not None:
        for r, f in keys:
            res = results[(r, f)]
            if not res.failed:
                on_fold_fit(r, f, res.fitted)

    if failed_folds:
        console.print(
            f"[yellow]{getattr(recipe, 'name', 'model')}: {failed_folds} fold fits failed, "
            f"{invalid} repeats invalid[/yellow]"
        )

    name = getattr(recipe, "name", type(recipe).__name__)
    return MetricReport(
        model=f"{name}-permuted" if permute else name,
        metric=metric,
        values=values,
        k=plan.k,
        repeats=plan.repeats,
        seed=plan.seed,
        failed_folds=failed_folds,
        invalid_repeats=invalid,
        metadata={"first_errors": errors[:3]} if errors else {},
    )


def cross_validate(
    recipe,
    dataset: RepeatedMeasuresDataset,
    plan: CvPlan,
    metric: Optional[str] = None,
    on_fold_fit: Optional[Callable[[int, int, object], None]] = None,
    threads: Optional[int] = None,
) -> MetricReport:
    """Blocking wrapper around cross_validate_async."""
    return asyncio.run(cross_validate_async(
        recipe, dataset, plan, metric=metric, on_fold_fit=on_fold_fit, threads=threads
    ))


def permutation_baseline(
    recipe,
    dataset: RepeatedMeasuresDataset,
    plan: CvPlan,
    metric: Optional[str] = None,
    threads: Optional[int] = None,
) -> MetricReport:
    """Cross-validate with outcomes permuted independently in each repeat."""
    return asyncio.run(cross_validate_async(
        recipe, dataset, plan, metric=metric, permute=True, threads=threads
    ))


async def compare_models_async(
    recipes: Sequence,
    dataset: RepeatedMeasuresDataset,
    plan: CvPlan,
    metric: Optional[str] = None,
    permutation: bool = False,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> list[MetricReport]:
    """Cross-validate each recipe on the same folds, plus optional permutation baselines."""
    reports = []
    for recipe in recipes:
        console.print(f"[bold blue]Cross-validating {getattr(recipe, 'name', recipe)}[/bold blue]")
        reports.append(await cross_validate_async(
            recipe, dataset, plan, metric, threads=threads, show_progress=show_progress
        ))
        if permutation:
            reports.append(await cross_validate_async(
                recipe, dataset, plan, metric, permute=True,
                threads=threads, show_progress=show_progress,
            ))
    return reports


def compare_models(
    recipes: Sequence,
    dataset: RepeatedMeasuresDataset,
    plan: CvPlan,
    metric: Optional[str] = None,
    permutation: bool = False,
    threads: Optional[int] = None,
) -> list[MetricReport]:
    """Blocking wrapper around compare_models_async."""
    return asyncio.run(compare_models_async(
        recipes, dataset, plan, metric, permutation=permutation, threads=threads
    ))
