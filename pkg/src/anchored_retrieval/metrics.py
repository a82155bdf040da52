"""Rank metrics (Recall@M, MRR@M, nDCG@M) and the paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Union

from .types import Qrels, RunList

METRICS = ("recall", "mrr", "ndcg")

Runs = Union[Mapping[str, RunList], Iterable[RunList]]


class UnjudgedQuery(LookupError):
    """The query has no document with a positive grade."""


def _relevant(run: RunList, qrels: Qrels) -> Dict[str, int]:
    rel = qrels.relevant(run.qid)
    if not rel:
        raise UnjudgedQuery(run.qid)
    return rel


def _check_cutoff(M: int) -> None:
    if M < 1:
        raise ValueError(f"cutoff must be >= 1, got {M}")


def recall_at(run: RunList, qrels: Qrels, M: int) -> float:
    _check_cutoff(M)
    rel = _relevant(run, qrels)
    hits = sum(1 for d in run.doc_ids[:M] if d in rel)
    return hits / len(rel)


def mrr_at(run: RunList, qrels: Qrels, M: int) -> float:
    _check_cutoff(M)
    rel = _relevant(run, qrels)
    for rank, d in enumerate(run.doc_ids[:M], start=1):
        if d in rel:
            return 1.0 / rank
    return 0.0


def ndcg_at(run: RunList, qrels: Qrels, M: int) -> float:
    """nDCG with exponential gain ``2**grade - 1`` and ``log2(rank + 1)`` discount."""
    _check_cutoff(M)
    _relevant(run, qrels)
    judged = qrels.judgments[run.qid]
    dcg = sum((2 ** judged.get(d, 0) - 1) / math.log2(i + 1) for i, d in enumerate(run.doc_ids[:M], start=1))
    ideal = sorted(judged.values(), reverse=True)[:M]
    idcg = sum((2**g - 1) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg


_METRIC_FNS = {"recall": recall_at, "mrr": mrr_at, "ndcg": ndcg_at}


@dataclass
class MetricResult:
    metric: str
    M: int
    per_query: Dict[str, float]
    excluded: int = 0
    missing: int = 0

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return sum(self.per_query[q] for q in sorted(self.per_query)) / len(self.per_query)

    @property
    def name(self) -> str:
        return f"{self.metric}@{self.M}"


def as_run_map(runs: Runs) -> Dict[str, RunList]:
    if isinstance(runs, Mapping):
        return dict(runs)
    out: Dict[str, RunList] = {}
    for r in runs:
        if r.qid in out:
            raise ValueError(f"two runs for query {r.qid!r}")
        out[r.qid] = r
    return out


def evaluate_metric(runs: Runs, qrels: Qrels, metric: str, M: int) -> MetricResult:
    """Score every judged query; a judged query with no run scores 0.

    Run queries without any positive judgment are excluded and counted.
    """
    if metric not in _METRIC_FNS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    run_map = as_run_map(runs)
    fn = _METRIC_FNS[metric]
    per_query = {}
    missing = 0
    for qid in qrels.qids():
        if not qrels.relevant(qid):
            continue
        run = run_map.get(qid)
        if run is None:
            missing += 1
            run = RunList(qid)
        per_query[qid] = fn(run, qrels, M)
    excluded = sum(1 for qid in run_map if not qrels.relevant(qid))
    return MetricResult(metric, M, per_query, excluded=excluded, missing=missing)


def evaluate_run(
    runs: Runs,
    qrels: Qrels,
    cutoffs: Sequence[int] = (1, 5, 10),
    rank_cutoff: int = 10,
) -> Dict[str, float]:
    """One report row: recall at each cutoff, plus MRR and nDCG at ``rank_cutoff``."""
    run_map = as_run_map(runs)
    if not any(qid in qrels for qid in run_map):
        raise ValueError("run and qrels share no query ids")
    row: Dict[str, float] = {}
    for M in cutoffs:
        row[f"recall@{M}"] = evaluate_metric(run_map, qrels, "recall", M).mean
    mrr = evaluate_metric(run_map, qrels, "mrr", rank_cutoff)
    row[f"mrr@{rank_cutoff}"] = mrr.mean
    row[f"ndcg@{rank_cutoff}"] = evaluate_metric(run_map, qrels, "ndcg", rank_cutoff).mean
    row["n_queries"] = len(mrr.per_query)
    row["n_excluded"] = mrr.excluded
    row["n_missing"] = mrr.missing
    return row


# --- paired t-test ------------------------------------------------------------


def _betacf(a: float, b: float, x: float, eps: float = 1e-16, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class PairedTestResult:
    n: int
    t_stat: float
    p_value: float
    mean_diff: float


def paired_ttest(a: Mapping[str, float], b: Mapping[str, float]) -> PairedTestResult:
    """Two-sided paired Student t-test over the query ids ``a`` and ``b`` share."""
    qids = sorted(set(a) & set(b))
    n = len(qids)
    if n < 2:
        raise ValueError(f"paired t-test needs at least 2 common queries, got {n}")
    diffs = [a[q] - b[q] for q in qids]
    mean = sum(diffs) / n
    # differences equal up to rounding (e.g. 0.3 - 0.2 vs 0.2 - 0.1) count as constant
    tol = 1e-12 * max(1.0, max(abs(d) for d in diffs))
    if max(diffs) - min(diffs) <= tol:
        if abs(mean) <= tol:
            return PairedTestResult(n, 0.0, 1.0, 0.0)
        return PairedTestResult(n, math.copysign(math.inf, mean), 0.0, mean)
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    t = mean / math.sqrt(var / n)
    return PairedTestResult(n, t, min(1.0, student_t_two_sided_p(t, n - 1)), mean)


@dataclass
class Comparison:
    metric: str
    base: MetricResult
    other: MetricResult
    test: PairedTestResult = field(init=False)

    def __post_init__(self) -> None:
        self.test = paired_ttest(self.other.per_query, self.base.per_query)


def compare_runs(base: Runs, other: Runs, qrels: Qrels, metric: str, M: int = 10) -> Comparison:
    """Paired test of ``other`` against ``base`` on a rank-sensitive metric."""
    if metric not in ("mrr", "ndcg"):
        raise ValueError("significance is only tested for mrr and ndcg")
    return Comparison(metric, evaluate_metric(base, qrels, metric, M), evaluate_metric(other, qrels, metric, M))
