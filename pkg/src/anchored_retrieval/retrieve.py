"""Run the observed query and each hypothesis through a backbone retriever."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .aggregation import Rescorer, RunBundle
from .dense import EmbeddingServiceClient, EmbeddingSource, VectorIndex, l2_normalize, read_embedding_file, score_dense
from .lexical import LexicalIndex, score_lexical
from .types import QueryRecord, RunList

DEFAULT_DEPTH = 100

# (ids, texts) -> matrix of unit rows, one per input
Encoder = Callable[[Sequence[str], Sequence[str]], np.ndarray]


def hypothesis_id(qid: str, k: int) -> str:
    """Id of the k-th (1-based) hypothesis of ``qid`` in embedding files."""
    return f"{qid}#h{k}"


class LexicalRetriever:
    missing_policy = "zero"

    def __init__(self, index: LexicalIndex, depth: int = DEFAULT_DEPTH):
        self.index = index
        self.depth = depth

    def search(self, qid: str, texts: Sequence[str]) -> List[RunList]:
        return [score_lexical(self.index, t, depth=self.depth, qid=qid) for t in texts]

    def rescorer(self, query: QueryRecord) -> Rescorer:
        texts = (query.text,) + query.hypotheses

        def rescore(slot: int, doc_ids: Sequence[str]) -> Mapping[str, float]:
            return score_lexical(self.index, texts[slot], candidates=doc_ids).scores()

        return rescore


class FileEncoder:
    """Looks embeddings up by id in an embedding TSV (a superset of the needed ids is fine)."""

    def __init__(self, path: str):
        ids, matrix = read_embedding_file(path)
        self.row_of = {d: i for i, d in enumerate(ids)}
        self.matrix = matrix
        self.path = path

    def __call__(self, ids: Sequence[str], texts: Sequence[str]) -> np.ndarray:
        missing = [d for d in ids if d not in self.row_of]
        if missing:
            raise KeyError(f"{self.path}: no embedding for id {missing[0]!r}")
        return l2_normalize(self.matrix[[self.row_of[d] for d in ids]], ids)


class ServiceEncoder:
    def __init__(self, source: EmbeddingSource):
        self.client = EmbeddingServiceClient(source)

    def __call__(self, ids: Sequence[str], texts: Sequence[str]) -> np.ndarray:
        return l2_normalize(np.array(self.client.embed(list(texts)), dtype=np.float64), ids)


class DenseRetriever:
    missing_policy = "exact-rescore"

    def __init__(self, index: VectorIndex, encoder: Encoder, depth: int = DEFAULT_DEPTH):
        self.index = index
        self.encoder = encoder
        self.depth = depth
        self._cache: Dict[str, np.ndarray] = {}

    def _vectors(self, qid: str, texts: Sequence[str]) -> np.ndarray:
        ids = [qid] + [hypothesis_id(qid, k) for k in range(1, len(texts))]
        return self.encoder(ids, texts)

    def search(self, qid: str, texts: Sequence[str]) -> List[RunList]:
        vecs = self._vectors(qid, texts)
        self._cache[qid] = vecs
        return [score_dense(self.index, v, top_m=self.depth, qid=qid) for v in vecs]

    def rescorer(self, query: QueryRecord) -> Rescorer:
        texts = (query.text,) + query.hypotheses
        vecs = self._cache.get(query.qid)
        if vecs is None or len(vecs) != len(texts):
            vecs = self._vectors(query.qid, texts)

        def rescore(slot: int, doc_ids: Sequence[str]) -> Mapping[str, float]:
            return score_dense(self.index, vecs[slot], candidates=doc_ids).scores()

        return rescore


def build_bundles(retriever, queries: Sequence[QueryRecord], jobs: int = 1) -> List[RunBundle]:
    """One bundle per query: the observed-query run plus one run per hypothesis."""

    def one(q: QueryRecord) -> RunBundle:
        runs = retriever.search(q.qid, (q.text,) + q.hypotheses)
        return RunBundle(q.qid, runs[0], tuple(runs[1:]))

    if jobs <= 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, queries))


def build_rescorers(retriever, queries: Sequence[QueryRecord]) -> Dict[str, Rescorer]:
    return {q.qid: retriever.rescorer(q) for q in queries}


def slot_runs(bundles: Sequence[RunBundle], k_max: Optional[int] = None) -> List[List[RunList]]:
    """Regroup bundles into per-slot run lists: slot 0 is the base run, slot k the k-th hypothesis."""
    k_max = max((b.K for b in bundles), default=0) if k_max is None else k_max
    slots: List[List[RunList]] = [[] for _ in range(k_max + 1)]
    for b in bundles:
        slots[0].append(b.base_run)
        for k, run in enumerate(b.hyp_runs[:k_max], start=1):
            slots[k].append(run)
    return slots


def bundles_from_slots(
    base: Sequence[RunList],
    hyp_slots: Sequence[Sequence[RunList]],
    n_hypotheses: Optional[Mapping[str, int]] = None,
) -> Tuple[List[RunBundle], Dict[str, List[int]]]:
    """Inverse of :func:`slot_runs` for runs read back from files.

    A run file cannot hold an empty run, so a query missing from slot k's
    file is ambiguous: it either had no k-th hypothesis or that hypothesis
    retrieved nothing. With ``n_hypotheses`` (qid -> hypothesis count) the
    first case is told apart and the second gets an empty run back, which
    reproduces the in-memory bundles. Without it the query simply gets
    fewer hypothesis runs.

    The second return value maps each qid to the 1-based slots it kept,
    which a rescorer needs to pick the right hypothesis text.
    """
    by_slot = [{r.qid: r for r in slot} for slot in hyp_slots]
    bundles, kept = [], {}
    for run in base:
        if n_hypotheses is None:
            slots = [k for k, slot in enumerate(by_slot, start=1) if run.qid in slot]
        else:
            slots = list(range(1, min(n_hypotheses.get(run.qid, 0), len(by_slot)) + 1))
        runs = tuple(by_slot[k - 1].get(run.qid) or RunList(run.qid, ()) for k in slots)
        bundles.append(RunBundle(run.qid, run, runs))
        kept[run.qid] = slots
    return bundles, kept
