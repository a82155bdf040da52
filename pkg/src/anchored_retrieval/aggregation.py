"""Query-anchored aggregation of hypothesis runs, plus unanchored pooling baselines.

For every candidate document ``d`` the anchored score is::

    alpha * S(q, d) + (1 - alpha) * max_k S(h_k, d)

where ``q`` is the observed query and ``h_k`` are its recovery hypotheses.
Raw retriever scores are combined as-is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .types import RunList

POOLINGS = ("anchored-max", "unanchored-max", "unanchored-mean", "unanchored-median")
MISSING_POLICIES = ("zero", "exact-rescore")

# (slot, doc_ids) -> {doc_id: score}; slot 0 is the observed query, slot k the k-th hypothesis
Rescorer = Callable[[int, Sequence[str]], Mapping[str, float]]


@dataclass(frozen=True)
class AggregationConfig:
    alpha: float = 0.8
    pooling: str = "anchored-max"
    missing_score_policy: str = "zero"
    output_depth: int = 100
    normalize: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}; expected one of {POOLINGS}")
        if self.missing_score_policy not in MISSING_POLICIES:
            raise ValueError(f"unknown missing-score policy {self.missing_score_policy!r}")
        if self.output_depth < 1:
            raise ValueError("output_depth must be >= 1")

    @property
    def tag(self) -> str:
        return f"{self.pooling}-a{self.alpha:g}-{self.missing_score_policy}-d{self.output_depth}"


@dataclass(frozen=True)
class RunBundle:
    qid: str
    base_run: RunList
    hyp_runs: Tuple[RunList, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hyp_runs", tuple(self.hyp_runs))
        for run in (self.base_run,) + self.hyp_runs:
            if run.qid != self.qid:
                raise ValueError(f"bundle {self.qid!r} contains a run for {run.qid!r}")

    @property
    def K(self) -> int:
        return len(self.hyp_runs)

    def prefix(self, k: int) -> "RunBundle":
        if k > self.K:
            raise ValueError(f"query {self.qid!r} has only {self.K} hypothesis runs, {k} requested")
        return RunBundle(self.qid, self.base_run, self.hyp_runs[:k])

    def candidates(self, include_hypotheses: bool = True) -> List[str]:
        docs = set(self.base_run.doc_ids)
        if include_hypotheses:
            for run in self.hyp_runs:
                docs.update(run.doc_ids)
        return sorted(docs)


@dataclass(frozen=True)
class ScoreTable:
    """Dense (1 + K) x C score matrix for one bundle after the missing-score policy."""

    qid: str
    doc_ids: Tuple[str, ...]
    scores: np.ndarray


def _min_max(row: np.ndarray) -> np.ndarray:
    lo, hi = row.min(), row.max()
    if hi == lo:
        return np.zeros_like(row)
    return (row - lo) / (hi - lo)


def score_table(
    bundle: RunBundle,
    missing_score_policy: str = "zero",
    rescorer: Optional[Rescorer] = None,
    normalize: bool = False,
) -> ScoreTable:
    if missing_score_policy == "exact-rescore" and rescorer is None:
        raise ValueError("exact-rescore policy needs a rescorer")
    doc_ids = bundle.candidates()
    col = {d: j for j, d in enumerate(doc_ids)}
    runs = (bundle.base_run,) + bundle.hyp_runs
    matrix = np.zeros((len(runs), len(doc_ids)), dtype=np.float64)
    for slot, run in enumerate(runs):
        present = run.scores()
        for d, s in present.items():
            matrix[slot, col[d]] = s
        if missing_score_policy == "exact-rescore":
            absent = [d for d in doc_ids if d not in present]
            if absent:
                rescored = rescorer(slot, absent)
                for d in absent:
                    matrix[slot, col[d]] = rescored[d]
        if normalize and doc_ids:
            matrix[slot] = _min_max(matrix[slot])
    return ScoreTable(bundle.qid, tuple(doc_ids), matrix)


def _ranked(qid: str, doc_ids: Sequence[str], scores: np.ndarray, depth: int) -> RunList:
    return RunList(qid, tuple(zip(doc_ids, scores.tolist()))).truncate(depth)


def anchored_scores(table: ScoreTable, alpha: float) -> np.ndarray:
    base = table.scores[0]
    best = table.scores[1:].max(axis=0)
    return alpha * base + (1.0 - alpha) * best


def aggregate_table(table: ScoreTable, bundle: RunBundle, cfg: AggregationConfig) -> RunList:
    """Rank a precomputed :class:`ScoreTable`; lets sweeps reuse one table across configs."""
    if cfg.pooling != "anchored-max":
        return _pool_table(table, bundle, cfg.pooling.split("-", 1)[1], cfg.output_depth)
    if bundle.K == 0 or cfg.alpha == 1.0:
        # hypotheses carry zero weight: they neither rescore nor add candidates
        return _base_only(table, bundle, cfg)
    return _ranked(table.qid, table.doc_ids, anchored_scores(table, cfg.alpha), cfg.output_depth)


def _base_only(table: ScoreTable, bundle: RunBundle, cfg: AggregationConfig) -> RunList:
    if not cfg.normalize:
        return bundle.base_run.truncate(cfg.output_depth)
    keep = set(bundle.base_run.doc_ids)
    idx = [j for j, d in enumerate(table.doc_ids) if d in keep]
    return _ranked(table.qid, [table.doc_ids[j] for j in idx], table.scores[0, idx], cfg.output_depth)


def _pool_table(table: ScoreTable, bundle: RunBundle, how: str, depth: int) -> RunList:
    if bundle.K == 0:
        return bundle.base_run.truncate(depth)
    if how == "max":
        pooled = table.scores.max(axis=0)
    elif how == "mean":
        pooled = table.scores.mean(axis=0)
    elif how == "median":
        pooled = np.median(table.scores, axis=0)
    else:
        raise ValueError(f"unknown pooling {how!r}")
    return _ranked(table.qid, table.doc_ids, pooled, depth)


def aggregate(bundle: RunBundle, cfg: AggregationConfig, rescorer: Optional[Rescorer] = None) -> RunList:
    """Fuse the observed-query run with its hypothesis runs according to ``cfg``."""
    table = score_table(bundle, cfg.missing_score_policy, rescorer, cfg.normalize)
    return aggregate_table(table, bundle, cfg)


def pool_unanchored(
    bundle: RunBundle,
    pooling: str,
    cfg: Optional[AggregationConfig] = None,
    rescorer: Optional[Rescorer] = None,
) -> RunList:
    """Pool the 1 + K runs symmetrically with ``max``, ``mean`` or ``median``.

    Missing scores follow ``cfg.missing_score_policy``; mean and median are
    always taken over all 1 + K inputs.
    """
    cfg = cfg or AggregationConfig()
    if pooling not in ("max", "mean", "median"):
        raise ValueError(f"unknown pooling {pooling!r}")
    table = score_table(bundle, cfg.missing_score_policy, rescorer, cfg.normalize)
    return _pool_table(table, bundle, pooling, cfg.output_depth)


def alpha_grid() -> List[float]:
    """0.1, 0.2, ..., 0.9 followed by the fine high end 0.91, ..., 0.99."""
    coarse = [round(i / 10, 2) for i in range(1, 10)]
    fine = [round(i / 100, 2) for i in range(91, 100)]
    return coarse + fine
