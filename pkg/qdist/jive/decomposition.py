"""
Joint and individual variation across domain blocks of L-moments.

Blocks are variables x subjects. Each block L^d is split as
J^d + A^d + E^d where J (stacked over blocks) has rank s, each A^d has rank
s_d, and the row space of every A^d is orthogonal to the row space of J.
"""

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg, stats

from ..shared.errors import ConvergenceWarning, QdistWarning, ValidationError
from ..shared.lmoments import lmoment_matrix
from ..shared.quantiles import QuantileGrid

if TYPE_CHECKING:
    from ..shared.datasets import RepeatedMeasuresDataset

CONVERGENCE_TOL = 1e-8
MAX_ITER = 500
MIN_PERMUTATIONS = 20


@dataclass(frozen=True, eq=False)
class RawBlock:
    """Unnormalized variables x subjects matrix for one domain."""
    domain: str
    row_labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] != len(self.row_labels):
            raise ValidationError(
                f"block '{self.domain}' has {values.shape[0]} rows but "
                f"{len(self.row_labels)} labels"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"block '{self.domain}' has non-finite entries")
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class LMomentBlockMatrix:
    """
    Normalized blocks sharing subject columns.

    ``scales`` holds each block's Frobenius norm before unit scaling and
    ``dropped`` the labels of constant rows removed during normalization.
    """
    domains: tuple[str, ...]
    blocks: tuple[np.ndarray, ...]
    row_labels: tuple[tuple[str, ...], ...]
    subject_ids: tuple[str, ...] = ()
    scales: tuple[float, ...] = ()
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.blocks:
            raise ValidationError("no blocks")
        if len(self.domains) != len(self.blocks) or len(self.row_labels) != len(self.blocks):
            raise ValidationError("domains, blocks and row labels differ in length")
        n = self.blocks[0].shape[1]
        for d, b in zip(self.domains, self.blocks):
            if b.ndim != 2 or b.shape[1] != n:
                raise ValidationError(f"block '{d}' does not have {n} subject columns")
        if self.subject_ids and len(self.subject_ids) != n:
            raise ValidationError("subject ids do not match the block columns")

    @classmethod
    def from_matrices(
        cls,
        matrices: Mapping[str, np.ndarray],
        subject_ids: Sequence[str] = (),
    ) -> "LMomentBlockMatrix":
        """Wrap already-prepared matrices without normalizing them."""
        domains = tuple(matrices)
        blocks = tuple(np.atleast_2d(np.asarray(matrices[d], dtype=float)) for d in domains)
        labels = tuple(tuple(f"{d}:{i}" for i in range(b.shape[0])) for d, b in zip(domains, blocks))
        return cls(domains, blocks, labels, tuple(subject_ids))

    @property
    def n(self) -> int:
        return int(self.blocks[0].shape[1])

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack(self.blocks)

    @property
    def slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.shape[0]))
            start += b.shape[0]
        return out

    def block(self, domain: str) -> np.ndarray:
        return self.blocks[self.domains.index(domain)]


def build_blocks(
    dataset: "RepeatedMeasuresDataset",
    grid: QuantileGrid,
    K: int = 4,
    method: str = "projection",
) -> dict[str, RawBlock]:
    """Per-domain L-moment tables with rows ``<feature>:L<r>`` and subject columns."""
    blocks = {}
    for domain, features in dataset.features_by_domain().items():
        rows, labels = [], []
        for feature in features:
            L = lmoment_matrix(dataset, feature, grid, K, method)
            rows.append(L.T)
            labels.extend(f"{feature}:L{r}" for r in range(1, K + 1))
        blocks[domain] = RawBlock(domain, tuple(labels), np.vstack(rows))
    if not blocks:
        raise ValidationError("no features are mapped to a domain")
    return blocks


def normalize_blocks(
    raw: Mapping[str, RawBlock],
    subject_ids: Sequence[str] = (),
) -> LMomentBlockMatrix:
    """
    Rank-based z-scores per row, then row centering, then unit Frobenius norm per block.

    z = Phi^-1((rank - 0.5) / n) with midranks for ties. Constant rows carry
    no information and are dropped with a warning.
    """
    if not raw:
        raise ValidationError("no blocks to normalize")
    n = next(iter(raw.values())).values.shape[1]
    if n < 3:
        raise ValidationError(f"need at least 3 subjects to normalize blocks, got {n}")

    domains, blocks, labels, scales, dropped = [], [], [], [], []
    for domain, block in raw.items():
        if block.values.shape[1] != n:
            raise ValidationError(f"block '{domain}' has {block.values.shape[1]} columns, expected {n}")
        constant = np.ptp(block.values, axis=1) == 0
        if np.any(constant):
            names = [lab for lab, c in zip(block.row_labels, constant) if c]
            dropped.extend(names)
            warnings.warn(
                f"dropped {len(names)} constant rows from block '{domain}': {', '.join(names[:5])}",
                QdistWarning,
                stacklevel=2,
            )
        kept = block.values[~constant]
        if kept.shape[0] == 0:
            raise ValidationError(f"block '{domain}' has no non-constant rows")

        ranks = stats.rankdata(kept, method="average", axis=1)
        z = stats.norm.ppf((ranks - 0.5) / n)
        z = z - z.mean(axis=1, keepdims=True)
        scale = float(np.linalg.norm(z))
        domains.append(domain)
        blocks.append(z / scale)
        labels.append(tuple(lab for lab, c in zip(block.row_labels, constant) if not c))
        scales.append(scale)

    return LMomentBlockMatrix(
        domains=tuple(domains),
        blocks=tuple(blocks),
        row_labels=tuple(labels),
        subject_ids=tuple(subject_ids),
        scales=tuple(scales),
        dropped=tuple(dropped),
    )


def _truncated_svd(X: np.ndarray, rank: int):
    """Rank-``rank`` reconstruction and its factors (U, s, Vt)."""
    if rank == 0 or not np.any(X):
        return (np.zeros_like(X), np.zeros((X.shape[0], rank)), np.zeros(rank),
                np.zeros((rank, X.shape[1])))
    U, s, Vt = linalg.svd(X, full_matrices=False)
    U, s, Vt = U[:, :rank], s[:rank], Vt[:rank]
    return (U * s) @ Vt, U, s, Vt


def _singular_values(X: np.ndarray) -> np.ndarray:
    return linalg.svd(X, compute_uv=False)


@dataclass
class JiveDecomposition:
    """Joint, individual and residual parts of each block, with scores and loadings."""
    blocks: LMomentBlockMatrix
    joint_rank: int
    individual_ranks: dict[str, int]
    joint: list[np.ndarray]
    individual: list[np.ndarray]
    residual: list[np.ndarray]
    joint_loadings: np.ndarray
    joint_scores: np.ndarray
    individual_loadings: dict[str, np.ndarray]
    individual_scores: dict[str, np.ndarray]
    iterations: int
    converged: bool

    @property
    def joint_row_space(self) -> np.ndarray:
        """Orthonormal n x s basis V of the joint row space."""
        if self.joint_rank == 0:
            return np.zeros((self.blocks.n, 0))
        norms = np.linalg.norm(self.joint_scores, axis=0)
        norms[norms == 0] = 1.0
        return self.joint_scores / norms

    def variance_explained(self) -> dict[str, dict[str, float]]:
        """Per block: joint, individual and residual fractions of ||L^d||_F^2."""
        out = {}
        for d, L, J, A in zip(self.blocks.domains, self.blocks.blocks, self.joint, self.individual):
            total = float(np.sum(L * L))
            if total == 0:
                out[d] = {"joint": 0.0, "individual": 0.0, "residual": 1.0}
                continue
            joint = float(np.sum(J * J)) / total
            individual = float(np.sum(A * A)) / total
            out[d] = {"joint": joint, "individual": individual, "residual": 1.0 - joint - individual}
        return out

    def scores(self) -> dict[str, np.ndarray]:
        """Score vectors keyed ``joint<k>`` and ``<domain><k>``."""
        out = {f"joint{k + 1}": self.joint_scores[:, k] for k in range(self.joint_rank)}
        for d in self.blocks.domains:
            S = self.individual_scores[d]
            out.update({f"{d}{k + 1}": S[:, k] for k in range(S.shape[1])})
        return out

    def score_rows(self) -> list[dict]:
        """Long rows ``subject_id,score_name,value``."""
        ids = self.blocks.subject_ids or tuple(str(i) for i in range(self.blocks.n))
        return [
            {"subject_id": sid, "score_name": name, "value": float(v)}
            for name, values in self.scores().items()
            for sid, v in zip(ids, values)
        ]

    def loading_rows(self) -> list[dict]:
        """Long rows ``domain,row,component,value``."""
        rows = []
        for d, sl, labels in zip(self.blocks.domains, self.blocks.slices, self.blocks.row_labels):
            for k in range(self.joint_rank):
                rows.extend(
                    {"domain": d, "row": lab, "component": f"joint{k + 1}", "value": float(v)}
                    for lab, v in zip(labels, self.joint_loadings[sl, k])
                )
            U = self.individual_loadings[d]
            for k in range(U.shape[1]):
                rows.extend(
                    {"domain": d, "row": lab, "component": f"{d}{k + 1}", "value": float(v)}
                    for lab, v in zip(labels, U[:, k])
                )
        return rows

    def summary(self) -> dict:
        return {
            "joint_rank": self.joint_rank,
            "individual_ranks": dict(self.individual_ranks),
            "variance_explained": self.variance_explained(),
            "iterations": self.iterations,
            "converged": self.converged,
            "n_subjects": self.blocks.n,
            "dropped_rows": list(self.blocks.dropped),
        }


def _resolve_individual_ranks(blocks: LMomentBlockMatrix, ranks) -> dict[str, int]:
    if isinstance(ranks, Mapping):
        missing = [d for d in blocks.domains if d not in ranks]
        if missing:
            raise ValidationError(f"no individual rank for domains: {', '.join(missing)}")
        out = {d: int(ranks[d]) for d in blocks.domains}
    else:
        ranks = list(ranks)
        if len(ranks) != len(blocks.domains):
            raise ValidationError(
                f"got {len(ranks)} individual ranks for {len(blocks.domains)} domains"
            )
        out = dict(zip(blocks.domains, map(int, ranks)))
    return out


def jive_decompose(
    blocks: LMomentBlockMatrix,
    joint_rank: int,
    individual_ranks,
    tol: float = CONVERGENCE_TOL,
    max_iter: int = MAX_ITER,
) -> JiveDecomposition:
    """
    Alternate joint and individual estimation until the joint part settles.

    Args:
        blocks: Normalized (or prepared) blocks
        joint_rank: Rank s of the joint structure
        individual_ranks: s_d per domain, as a mapping or in domain order
        tol: Stop when ||J_new - J_old||_F falls below this
        max_iter: Iteration cap; the last iterate is returned flagged

    Returns:
        JiveDecomposition with E^d = L^d - J^d - A^d
    """
    ranks = _resolve_individual_ranks(blocks, individual_ranks)
    if joint_rank < 0 or any(r < 0 for r in ranks.values()):
        raise ValidationError("ranks must be nonnegative")
    n = blocks.n
    if joint_rank + max(ranks.values()) > n:
        raise ValidationError(
            f"joint rank {joint_rank} plus largest individual rank {max(ranks.values())} "
            f"exceeds the {n} subjects"
        )
    if joint_rank > sum(b.shape[0] for b in blocks.blocks):
        raise ValidationError(f"joint rank {joint_rank} exceeds the number of rows")
    for d, b in zip(blocks.domains, blocks.blocks):
        if ranks[d] > b.shape[0]:
            raise ValidationError(f"individual rank {ranks[d]} exceeds the rows of block '{d}'")

    L = blocks.stacked
    slices = blocks.slices
    individual = [np.zeros_like(b) for b in blocks.blocks]
    joint_prev = np.zeros_like(L)
    converged = False

    for iteration in range(1, max_iter + 1):
        J, U, s, Vt = _truncated_svd(L - np.vstack(individual), joint_rank)
        projector = np.eye(n) - Vt.T @ Vt
        ind_factors = []
        for i, (d, sl) in enumerate(zip(blocks.domains, slices)):
            A, Ud, sd, Vtd = _truncated_svd((L[sl] - J[sl]) @ projector, ranks[d])
            individual[i] = A
            ind_factors.append((Ud, sd, Vtd))
        change = float(np.linalg.norm(J - joint_prev))
        joint_prev = J
        if change < tol and iteration > 1:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"decomposition did not converge in {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )

    joint = [J[sl] for sl in slices]
    residual = [b - Jd - Ad for b, Jd, Ad in zip(blocks.blocks, joint, individual)]
    return JiveDecomposition(
        blocks=blocks,
        joint_rank=joint_rank,
        individual_ranks=ranks,
        joint=joint,
        individual=individual,
        residual=residual,
        joint_loadings=U,
        joint_scores=Vt.T * s,
        individual_loadings={d: f[0] for d, f in zip(blocks.domains, ind_factors)},
        individual_scores={d: f[2].T * f[1] for d, f in zip(blocks.domains, ind_factors)},
        iterations=iteration,
        converged=converged,
    )


@dataclass
class RankSelection:
    """Ranks chosen by permutation with the null thresholds they were compared to."""
    joint_rank: int
    individual_ranks: dict[str, int]
    joint_singular_values: np.ndarray
    joint_thresholds: np.ndarray
    individual_thresholds: dict[str, np.ndarray] = field(default_factory=dict)
    n_perm: int = 0
    alpha: float = 0.05
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "joint_rank": self.joint_rank,
            "individual_ranks": dict(self.individual_ranks),
            "joint_singular_values": self.joint_singular_values.tolist(),
            "joint_thresholds": self.joint_thresholds.tolist(),
            "individual_thresholds": {d: t.tolist() for d, t in self.individual_thresholds.items()},
            "n_perm": self.n_perm,
            "alpha": self.alpha,
            "seed": self.seed,
        }


def _joint_null(blocks: tuple[np.ndarray, ...], seed: np.random.SeedSequence) -> np.ndarray:
    # Independent column permutations per block break cross-block alignment.
    rng = np.random.default_rng(seed)
    permuted = [b[:, rng.permutation(b.shape[1])] for b in blocks]
    return _singular_values(np.vstack(permuted))


def _individual_null(
    residual: np.ndarray,
    projector: np.ndarray,
    seed: np.random.SeedSequence,
) -> np.ndarray:
    # Permuting within each row removes all between-row structure.
    rng = np.random.default_rng(seed)
    permuted = rng.permuted(residual, axis=1)
    return _singular_values(permuted @ projector)


def _forward_rank(observed: np.ndarray, null: np.ndarray, alpha: float, max_rank: int) -> tuple[int, np.ndarray]:
    thresholds = np.quantile(null, 1.0 - alpha, axis=0)
    rank = 0
    while rank < min(max_rank, observed.size, thresholds.size) and observed[rank] > thresholds[rank]:
        rank += 1
    return rank, thresholds


def select_ranks_permutation(
    blocks: LMomentBlockMatrix,
    n_perm: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> RankSelection:
    """
    Forward rank selection against permutation nulls.

    The joint rank compares singular values of the stacked blocks with those
    of blocks whose columns were permuted independently per block. Each
    individual rank then compares the block's residual, with the joint part
    and joint row space removed, against row-wise permutations of it.
    Replicate seeds are spawned from ``seed`` so results do not depend on
    ``n_jobs``.
    """
    if n_perm < MIN_PERMUTATIONS:
        raise ValidationError(f"need at least {MIN_PERMUTATIONS} permutations, got {n_perm}")
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")

    n = blocks.n
    joint_seeds, *block_seeds = np.random.SeedSequence(seed).spawn(1 + len(blocks.domains))
    parallel = Parallel(n_jobs=n_jobs)

    L = blocks.stacked
    observed = _singular_values(L)
    null = np.stack(parallel(
        delayed(_joint_null)(blocks.blocks, s) for s in joint_seeds.spawn(n_perm)
    ))
    joint_rank, joint_thresholds = _forward_rank(observed, null, alpha, n - 1)

    J, _, _, Vt = _truncated_svd(L, joint_rank)
    projector = np.eye(n) - Vt.T @ Vt
    ranks, thresholds = {}, {}
    for d, sl, ss in zip(blocks.domains, blocks.slices, block_seeds):
        residual = (L[sl] - J[sl]) @ projector
        observed_d = _singular_values(residual)
        null_d = np.stack(parallel(
            delayed(_individual_null)(L[sl] - J[sl], projector, s) for s in ss.spawn(n_perm)
        ))
        ranks[d], thresholds[d] = _forward_rank(observed_d, null_d, alpha, n - joint_rank)

    return RankSelection(
        joint_rank=joint_rank,
        individual_ranks=ranks,
        joint_singular_values=observed,
        joint_thresholds=joint_thresholds,
        individual_thresholds=thresholds,
        n_perm=n_perm,
        alpha=alpha,
        seed=seed,
    )


def score_cross_correlation(
    decomposition: JiveDecomposition,
    blocks: Optional[LMomentBlockMatrix] = None,
) -> list[dict]:
    """
    Pearson correlation of every score vector with every block row.

    A zero-variance score or row gets correlation 0 and ``zero_variance``
    set.
    """
    blocks = blocks or decomposition.blocks
    if blocks.n != decomposition.blocks.n:
        raise ValidationError("decomposition and blocks have different subject counts")

    rows = []
    for name, score in decomposition.scores().items():
        sc = score - score.mean()
        s_norm = float(np.linalg.norm(sc))
        for d, block, labels in zip(blocks.domains, blocks.blocks, blocks.row_labels):
            centered = block - block.mean(axis=1, keepdims=True)
            r_norms = np.linalg.norm(centered, axis=1)
            for label, row, r_norm in zip(labels, centered, r_norms):
                flat = s_norm <= 1e-14 or r_norm <= 1e-14
                corr = 0.0 if flat else float(np.clip(sc @ row / (s_norm * r_norm), -1.0, 1.0))
                rows.append({
                    "score": name,
                    "domain": d,
                    "row": label,
                    "correlation": corr,
                    "zero_variance": flat,
                })
    return rows


def top_correlated(table: Sequence[dict], score_name: str, n: int = 10) -> list[dict]:
    """Rows of ``table`` for one score, ordered by absolute correlation."""
    chosen = [r for r in table if r["score"] == score_name]
    if not chosen:
        raise ValidationError(f"no correlations for score '{score_name}'")
    return sorted(chosen, key=lambda r: -abs(r["correlation"]))[:n]
