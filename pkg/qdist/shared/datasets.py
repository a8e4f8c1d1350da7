"""Repeated-measures datasets and long-format CSV ingestion."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError

OBSERVATION_COLUMNS = ("subject_id", "feature_id", "value")
SUBJECT_COLUMNS = ("subject_id", "outcome")
DOMAIN_COLUMNS = ("feature_id", "domain")

# Minimum observations per subject-feature for any analysis.
MIN_OBSERVATIONS = 2


@dataclass(frozen=True)
class SubjectRecord:
    """One subject: outcome, scalar covariates and raw repeated measures."""
    subject_id: str
    outcome: float
    covariates: dict[str, float] = field(default_factory=dict)
    observations: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class RepeatedMeasuresDataset:
    """Subjects x features x raw observations, with outcomes and covariates."""
    subjects: tuple[SubjectRecord, ...]
    domains: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        if not subjects:
            raise ValidationError("dataset has no subjects")
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids in dataset")
        y = np.array([s.outcome for s in subjects], dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes must be finite")

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    @property
    def features(self) -> list[str]:
        names: set[str] = set()
        for s in self.subjects:
            names.update(s.observations)
        return sorted(names)

    @property
    def covariate_names(self) -> list[str]:
        names: set[str] = set()
        for s in self.subjects:
            names.update(s.covariates)
        return sorted(names)

    @property
    def outcome_type(self) -> str:
        """'binary' when every outcome is 0 or 1, else 'continuous'."""
        y = self.outcomes()
        return "binary" if np.all((y == 0) | (y == 1)) else "continuous"

    def outcomes(self) -> np.ndarray:
        return np.array([s.outcome for s in self.subjects], dtype=float)

    def covariate_matrix(self, names: Sequence[str]) -> np.ndarray:
        """(n_subjects, len(names)) array of covariates."""
        missing = [
            (s.subject_id, name)
            for s in self.subjects
            for name in names
            if name not in s.covariates
        ]
        if missing:
            sid, name = missing[0]
            raise ValidationError(
                f"covariate '{name}' missing for subject '{sid}'"
                + (f" and {len(missing) - 1} other cells" if len(missing) > 1 else "")
            )
        return np.array(
            [[s.covariates[name] for name in names] for s in self.subjects],
            dtype=float,
        ).reshape(len(self.subjects), len(names))

    def require_feature(self, feature: str, min_observations: int = MIN_OBSERVATIONS) -> None:
        """Raise unless every subject has enough observations of ``feature``."""
        short = [
            s.subject_id
            for s in self.subjects
            if len(s.observations.get(feature, ())) < min_observations
        ]
        if short:
            shown = ", ".join(short[:10])
            more = "" if len(short) <= 10 else f" (+{len(short) - 10} more)"
            raise ValidationError(
                f"feature '{feature}' has fewer than {min_observations} observations "
                f"for subjects: {shown}{more}"
            )

    def feature_samples(self, feature: str) -> list[np.ndarray]:
        self.require_feature(feature)
        return [s.observations[feature] for s in self.subjects]

    def subset(self, subject_ids: Iterable[str]) -> "RepeatedMeasuresDataset":
        """Dataset restricted to ``subject_ids``, in the given order."""
        by_id = {s.subject_id: s for s in self.subjects}
        try:
            chosen = tuple(by_id[sid] for sid in subject_ids)
        except KeyError as e:
            raise ValidationError(f"unknown subject id {e.args[0]!r}") from None
        return RepeatedMeasuresDataset(subjects=chosen, domains=dict(self.domains))

    def take(self, indices: Sequence[int]) -> "RepeatedMeasuresDataset":
        return RepeatedMeasuresDataset(
            subjects=tuple(self.subjects[i] for i in indices),
            domains=dict(self.domains),
        )

    def with_outcomes(self, outcomes: Sequence[float]) -> "RepeatedMeasuresDataset":
        """Copy with outcomes replaced (used for permutation baselines)."""
        outcomes = np.asarray(outcomes, dtype=float)
        if outcomes.size != len(self.subjects):
            raise ValidationError("outcome vector length does not match subject count")
        subjects = tuple(
            SubjectRecord(
                subject_id=s.subject_id,
                outcome=float(y),
                covariates=s.covariates,
                observations=s.observations,
            )
            for s, y in zip(self.subjects, outcomes)
        )
        return RepeatedMeasuresDataset(subjects=subjects, domains=dict(self.domains))

    def features_by_domain(self) -> dict[str, list[str]]:
        if not self.domains:
            raise ValidationError("dataset has no feature-to-domain mapping")
        grouped: dict[str, list[str]] = {}
        for feature, domain in sorted(self.domains.items()):
            if feature in self.features:
                grouped.setdefault(domain, []).append(feature)
        return grouped


def _read_csv(path: Path, required: Sequence[str], kind: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{kind} file not found: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise ValidationError(f"malformed {kind} file {path}: {e}") from None
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{kind} file {path} is empty") from None
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValidationError(
            f"{kind} file {path} is missing columns: {', '.join(missing)}"
        )
    return frame


def _numeric_column(frame: pd.DataFrame, column: str, path: Path, kind: str) -> np.ndarray:
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float)))
    if bad.size:
        # +2: one for the header row, one for 1-based line numbers
        line = int(bad[0]) + 2
        raise ValidationError(
            f"{kind} file {path} line {line}: column '{column}' "
            f"has non-numeric value {frame[column].iloc[bad[0]]!r}"
        )
    return values.to_numpy(dtype=float)


def load_dataset(
    observations_path: Path,
    subjects_path: Path,
    domains_path: Optional[Path] = None,
) -> RepeatedMeasuresDataset:
    """
    Load a dataset from long-format CSV files.

    Args:
        observations_path: CSV with ``subject_id,feature_id,value``
        subjects_path: CSV with ``subject_id,outcome,<covariates...>``
        domains_path: Optional CSV with ``feature_id,domain``

    Returns:
        RepeatedMeasuresDataset with subjects in subjects-file order
    """
    obs = _read_csv(observations_path, OBSERVATION_COLUMNS, "observations")
    subj = _read_csv(subjects_path, SUBJECT_COLUMNS, "subjects")

    obs_values = _numeric_column(obs, "value", Path(observations_path), "observations")
    outcome = _numeric_column(subj, "outcome", Path(subjects_path), "subjects")
    covariate_names = [c for c in subj.columns if c not in SUBJECT_COLUMNS]
    covariates = {
        name: _numeric_column(subj, name, Path(subjects_path), "subjects")
        for name in covariate_names
    }

    subject_ids = subj["subject_id"].str.strip().tolist()
    if len(set(subject_ids)) != len(subject_ids):
        raise ValidationError(f"subjects file {subjects_path} has duplicate subject ids")

    obs = obs.assign(
        subject_id=obs["subject_id"].str.strip(),
        feature_id=obs["feature_id"].str.strip(),
        value=obs_values,
    )
    unknown = sorted(set(obs["subject_id"]) - set(subject_ids))
    if unknown:
        raise ValidationError(
            f"observations file {observations_path} references subjects missing "
            f"from {subjects_path}: {', '.join(unknown[:10])}"
        )

    # groupby keeps file order within each group, so samples are stable
    grouped: dict[str, dict[str, np.ndarray]] = {sid: {} for sid in subject_ids}
    for (sid, fid), group in obs.groupby(["subject_id", "feature_id"], sort=True):
        grouped[sid][fid] = group["value"].to_numpy(dtype=float)

    subjects = tuple(
        SubjectRecord(
            subject_id=sid,
            outcome=float(outcome[i]),
            covariates={name: float(col[i]) for name, col in covariates.items()},
            observations=grouped[sid],
        )
        for i, sid in enumerate(subject_ids)
    )

    domains: dict[str, str] = {}
    if domains_path is not None:
        dom = _read_csv(domains_path, DOMAIN_COLUMNS, "domains")
        domains = dict(zip(dom["feature_id"].str.strip(), dom["domain"].str.strip()))

    return RepeatedMeasuresDataset(subjects=subjects, domains=domains)


def write_dataset(dataset: RepeatedMeasuresDataset, directory: Path) -> dict[str, Path]:
    """Write observations.csv, subjects.csv and (if present) domains.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    obs_rows = [
        (s.subject_id, fid, float(v))
        for s in dataset.subjects
        for fid in sorted(s.observations)
        for v in s.observations[fid]
    ]
    paths = {
        "observations": directory / "observations.csv",
        "subjects": directory / "subjects.csv",
    }
    pd.DataFrame(obs_rows, columns=list(OBSERVATION_COLUMNS)).to_csv(
        paths["observations"], index=False, float_format="%.17g", lineterminator="\n"
    )

    cov_names = dataset.covariate_names
    subj_rows = [
        [s.subject_id, s.outcome] + [s.covariates[c] for c in cov_names]
        for s in dataset.subjects
    ]
    pd.DataFrame(subj_rows, columns=list(SUBJECT_COLUMNS) + cov_names).to_csv(
        paths["subjects"], index=False, float_format="%.17g", lineterminator="\n"
    )

    if dataset.domains:
        paths["domains"] = directory / "domains.csv"
        pd.DataFrame(
            sorted(dataset.domains.items()), columns=list(DOMAIN_COLUMNS)
        ).to_csv(paths["domains"], index=False, lineterminator="\n")
    return paths
