"""Cross-validation metrics and reports."""

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ValidationError
from .pglm import PenalizedFit, deviance_explained

METRIC_KINDS = ("cvAUC", "cvR2", "deviance_explained")

REPORT_COLUMNS = ("model", "metric", "mean", "sd", "B", "k", "seed")


def auc(scores, labels) -> float:
    """
    Area under the ROC curve by the Mann-Whitney rank formula.

    Ties count one half: P(score+ > score-) + P(tie) / 2.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=float).ravel()
    if scores.size != labels.size:
        raise ValidationError(f"{scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("AUC labels must be 0 or 1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes among the labels")
    ranks = stats.rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def cv_r2(predictions, truths, baselines=None) -> float:
    """
    1 - SSE / SST.

    SST is taken around ``baselines`` (one per prediction, normally the mean
    outcome of the fold the model was trained on); without them, around the
    mean of ``truths``.
    """
    pred = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    if pred.size != y.size:
        raise ValidationError(f"{pred.size} predictions for {y.size} outcomes")
    if y.size < 2 or np.ptp(y) == 0:
        raise ValidationError("cv-R2 needs outcomes with nonzero variance")
    if baselines is None:
        base = np.full_like(y, y.mean())
    else:
        base = np.asarray(baselines, dtype=float).ravel()
        if base.size != y.size:
            raise ValidationError(f"{base.size} baselines for {y.size} outcomes")
    sst = float(np.sum((y - base) ** 2))
    if sst == 0:
        raise ValidationError("cv-R2 baseline sum of squares is zero")
    return 1.0 - float(np.sum((y - pred) ** 2)) / sst


@dataclass
class MetricReport:
    """Per-repeat values of one metric for one model."""
    model: str
    metric: str
    values: list[float]
    k: int = 0
    repeats: int = 1
    seed: Optional[int] = None
    failed_folds: int = 0
    invalid_repeats: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in METRIC_KINDS:
            raise ValidationError(f"unknown metric '{self.metric}'")

    @property
    def valid_values(self) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        return v[np.isfinite(v)]

    @property
    def mean(self) -> float:
        v = self.valid_values
        return float(v.mean()) if v.size else float("nan")

    @property
    def sd(self) -> float:
        v = self.valid_values
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def confidence_interval(self, confidence: float = 0.95) -> tuple[float, float]:
        """
        Normal-approximation interval for the mean over repeats.

        Repeats share subjects, so this understates the sampling error of
        the metric itself.
        """
        v = self.valid_values
        if v.size == 0:
            return (float("nan"), float("nan"))
        z = stats.norm.ppf(0.5 + confidence / 2.0)
        se = self.sd / math.sqrt(v.size)
        return (self.mean - z * se, self.mean + z * se)

    def to_row(self) -> dict:
        """One ``model,metric,mean,sd,B,k,seed`` row."""
        return {
            "model": self.model,
            "metric": self.metric,
            "mean": self.mean,
            "sd": self.sd,
            "B": self.repeats,
            "k": self.k,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        lower, upper = self.confidence_interval()
        return {
            **self.to_row(),
            "values": [float(v) for v in self.values],
            "ci95": [lower, upper],
            "failed_folds": self.failed_folds,
            "invalid_repeats": self.invalid_repeats,
            "metadata": self.metadata,
        }

    def to_json(self, indent: int = 2) -> str:
        """Convert to JSON string."""
        return json.dumps(self.to_dict(), indent=indent)

    def to_markdown(self) -> str:
        """Generate markdown report."""
        lower, upper = self.confidence_interval()
        lines = [
            f"# {self.model} {self.metric}",
            "",
            f"**Mean:** {self.mean:.4f} (sd {self.sd:.4f})",
            f"**95% CI:** [{lower:.4f}, {upper:.4f}]",
            f"**Repeats:** {self.repeats} x {self.k}-fold" if self.k else f"**Repeats:** {self.repeats}",
            f"**Seed:** {self.seed}",
        ]
        if self.failed_folds or self.invalid_repeats:
            lines.append(
                f"**Failed folds:** {self.failed_folds} "
                f"({self.invalid_repeats} repeats invalid)"
            )
        if self.metadata:
            lines.extend(["", "## Metadata", ""])
            for key, value in self.metadata.items():
                lines.append(f"- **{key}:** {value}")
        return "\n".join(lines)


def deviance_report(name: str, fit: PenalizedFit) -> MetricReport:
    """In-sample deviance explained as a single-value report."""
    return MetricReport(
        model=name,
        metric="deviance_explained",
        values=[deviance_explained(fit)],
        metadata={"edf": round(float(fit.edf), 6), "n": fit.n},
    )


def compare_reports(report_a: MetricReport, report_b: MetricReport) -> dict:
    """
    Compare two reports of the same metric.

    Returns dict with the mean difference and the winner.
    """
    if report_a.metric != report_b.metric:
        raise ValidationError(
            f"cannot compare {report_a.metric} with {report_b.metric}"
        )
    diff = report_a.mean - report_b.mean
    paired = None
    if len(report_a.values) == len(report_b.values) and len(report_a.values) > 1:
        d = np.asarray(report_a.values, dtype=float) - np.asarray(report_b.values, dtype=float)
        d = d[np.isfinite(d)]
        if d.size:
            paired = float(np.mean(d > 0))
    return {
        "model_a": report_a.model,
        "model_b": report_b.model,
        "metric": report_a.metric,
        "mean_diff": diff,
        "fraction_a_better": paired,
        "winner": report_a.model if diff >= 0 else report_b.model,
    }


def report_rows(reports: Sequence[MetricReport]) -> list[dict]:
    """CSV rows for a list of reports."""
    return [r.to_row() for r in reports]
