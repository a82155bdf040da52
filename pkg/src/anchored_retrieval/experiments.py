"""Alpha sweeps and K / pooling ablations over a fixed set of run bundles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence

from .aggregation import AggregationConfig, Rescorer, RunBundle, ScoreTable, aggregate_table, score_table
from .hypotheses import CorruptorProvider, attach_hypotheses
from .lexical import build_lexical_index
from .metrics import evaluate_metric, evaluate_run, paired_ttest
from .noise import get_level
from .retrieve import LexicalRetriever, build_bundles
from .simulation import simulate, synthetic_corpus
from .tokenize import Tokenizer
from .types import Corpus, QueryRecord, Qrels, RunList

SWEEP_COLUMNS = ("alpha", "recall@1", "recall@5", "recall@10", "mrr@10", "ndcg@10", "d_mrr", "d_ndcg")


def _tables(
    bundles: Sequence[RunBundle],
    cfg: AggregationConfig,
    rescorers: Optional[Mapping[str, Rescorer]],
) -> List[ScoreTable]:
    rescorers = rescorers or {}
    return [score_table(b, cfg.missing_score_policy, rescorers.get(b.qid), cfg.normalize) for b in bundles]


def _run_all(bundles: Sequence[RunBundle], tables: Sequence[ScoreTable], cfg: AggregationConfig) -> List[RunList]:
    return [aggregate_table(t, b, cfg) for b, t in zip(bundles, tables)]


def base_runs(bundles: Sequence[RunBundle]) -> List[RunList]:
    return [b.base_run for b in bundles]


def _row(runs: Sequence[RunList], qrels: Qrels, cutoffs: Sequence[int], rank_cutoff: int) -> Dict[str, float]:
    row = evaluate_run(runs, qrels, cutoffs, rank_cutoff)
    return {k: v for k, v in row.items() if not k.startswith("n_")}


def sweep_alpha(
    bundles: Sequence[RunBundle],
    cfg: AggregationConfig,
    qrels: Qrels,
    grid: Sequence[float],
    rescorers: Optional[Mapping[str, Rescorer]] = None,
    cutoffs: Sequence[int] = (1, 5, 10),
    rank_cutoff: int = 10,
) -> List[Dict[str, float]]:
    """One row per alpha in ``grid`` plus the alpha = 1 baseline row (last).

    ``d_mrr`` / ``d_ndcg`` are differences from the alpha = 1 row.
    """
    if not grid:
        raise ValueError("alpha grid is empty")
    cfg = replace(cfg, pooling="anchored-max")
    tables = _tables(bundles, cfg, rescorers)
    alphas = list(grid) + ([] if 1.0 in grid else [1.0])
    rows = []
    for a in alphas:
        runs = _run_all(bundles, tables, replace(cfg, alpha=a))
        rows.append({"alpha": a, **_row(runs, qrels, cutoffs, rank_cutoff)})
    baseline = next(r for r in rows if r["alpha"] == 1.0)
    mrr, ndcg = f"mrr@{rank_cutoff}", f"ndcg@{rank_cutoff}"
    for r in rows:
        r["d_mrr"] = r[mrr] - baseline[mrr]
        r["d_ndcg"] = r[ndcg] - baseline[ndcg]
    return rows


def _significance(base: Sequence[RunList], other: Sequence[RunList], qrels: Qrels, metric: str, M: int) -> float:
    a = evaluate_metric(other, qrels, metric, M).per_query
    b = evaluate_metric(base, qrels, metric, M).per_query
    return paired_ttest(a, b).p_value


def ablate_k(
    bundles: Sequence[RunBundle],
    ks: Sequence[int],
    cfg: AggregationConfig,
    qrels: Qrels,
    rescorers: Optional[Mapping[str, Rescorer]] = None,
    cutoffs: Sequence[int] = (1, 5, 10),
    rank_cutoff: int = 10,
) -> List[Dict[str, float]]:
    """Aggregate with only the first K hypothesis runs, for each K in ``ks``.

    Each row also carries the mean candidate-set size and paired t-test
    p-values (MRR, nDCG) against the base retriever.
    """
    cfg = replace(cfg, pooling="anchored-max")
    need = max(ks)
    for b in bundles:
        if b.K < need:
            raise ValueError(f"query {b.qid!r} has {b.K} hypothesis runs, K={need} requested")
    base = base_runs(bundles)
    rows = []
    for k in ks:
        sub = [b.prefix(k) for b in bundles]
        runs = _run_all(sub, _tables(sub, cfg, rescorers), cfg)
        row = {"K": k, **_row(runs, qrels, cutoffs, rank_cutoff)}
        row["candidates"] = sum(len(b.candidates()) for b in sub) / len(sub)
        row["p_mrr"] = _significance(base, runs, qrels, "mrr", rank_cutoff)
        row["p_ndcg"] = _significance(base, runs, qrels, "ndcg", rank_cutoff)
        rows.append(row)
    return rows


def ablate_pooling(
    bundles: Sequence[RunBundle],
    cfg: AggregationConfig,
    qrels: Qrels,
    rescorers: Optional[Mapping[str, Rescorer]] = None,
    cutoffs: Sequence[int] = (1, 5, 10),
    rank_cutoff: int = 10,
) -> List[Dict[str, float]]:
    """Anchored aggregation at ``cfg.alpha`` against the three unanchored poolings."""
    tables = _tables(bundles, cfg, rescorers)
    rows = []
    for pooling in ("unanchored-median", "unanchored-mean", "unanchored-max", "anchored-max"):
        runs = _run_all(bundles, tables, replace(cfg, pooling=pooling))
        rows.append({"pooling": pooling, **_row(runs, qrels, cutoffs, rank_cutoff)})
    return rows


def rows_to_csv(rows: Sequence[Mapping[str, object]], columns: Optional[Sequence[str]] = None) -> str:
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def rows_to_text(rows: Sequence[Mapping[str, object]], columns: Optional[Sequence[str]] = None) -> str:
    columns = list(columns or rows[0].keys())
    cells = [columns] + [[_fmt(r[c], ".4f") for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells) + "\n"


@dataclass
class DeskBenchmark:
    corpus: Corpus
    queries: List[QueryRecord]
    qrels: Qrels
    retriever: LexicalRetriever
    bundles: List[RunBundle]


def desk_benchmark(
    n_docs: int = 2000,
    n_queries: int = 200,
    query_level: str = "L2",
    hyp_level: str = "L3",
    k: int = 5,
    seed: int = 0,
    tokenizer: str = "cjk-char-bigrams",
    depth: int = 100,
) -> DeskBenchmark:
    """Small self-contained benchmark: synthetic corpus, noisy queries, corruptor hypotheses, BM25.

    Hypotheses are drawn at a heavier noise level than the queries, so they
    explore further from the observed query than near-copies would.
    """
    corpus = synthetic_corpus(n_docs, seed=seed)
    sim = simulate(corpus, get_level(query_level), n_queries, seed=seed)
    retriever = LexicalRetriever(build_lexical_index(corpus, Tokenizer(tokenizer)), depth)
    queries = attach_hypotheses(CorruptorProvider(k, hyp_level, seed=seed), sim.queries)
    return DeskBenchmark(corpus, queries, sim.qrels, retriever, build_bundles(retriever, queries))


def _fmt(value: object, spec: str = ".10g") -> str:
    return format(value, spec) if isinstance(value, float) else str(value)
