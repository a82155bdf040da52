"""Synthetic lyric-like corpora and recall-noise benchmarks built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .faithfulness import faithfulness_report
from .noise import CJK_START, NoiseLevel, corrupt_query
from .seeding import derive_seed
from .types import Corpus, Document, QueryRecord, Qrels


def synthetic_corpus(
    n_docs: int,
    seed: int = 0,
    vocab_size: int = 400,
    n_phrases: int = 300,
    char_zipf: float = 1.0,
    phrase_zipf: float = 1.5,
    mean_len: float = 10.0,
    len_sd: float = 2.5,
    min_len: int = 4,
    max_len: int = 32,
) -> Corpus:
    """Lyric-like lines of CJK characters.

    Lines are stitched together from a Zipf-weighted bank of 2-4 character
    phrases, so popular phrases recur across many lines and a corrupted
    query has plausible distractors. The character vocabulary is a
    contiguous block of code points, so the noise channel's confusion
    groups substitute in-vocabulary characters.
    """
    rng = np.random.default_rng(derive_seed(seed, "synthetic-corpus"))
    char_w = np.arange(1, vocab_size + 1, dtype=np.float64) ** -char_zipf
    char_w /= char_w.sum()
    codepoints = CJK_START + rng.permutation(vocab_size)
    phrases = [
        "".join(chr(c) for c in codepoints[rng.choice(vocab_size, size=rng.integers(2, 5), p=char_w)])
        for _ in range(n_phrases)
    ]
    phrase_w = np.arange(1, n_phrases + 1, dtype=np.float64) ** -phrase_zipf
    phrase_w /= phrase_w.sum()

    docs = []
    seen = set()
    while len(docs) < n_docs:
        target = int(np.clip(round(rng.normal(mean_len, len_sd)), min_len, max_len))
        text = ""
        while len(text) < target:
            text += phrases[rng.choice(n_phrases, p=phrase_w)]
        if rng.random() < 0.5:
            text = text[:target]
        if text in seen:
            continue
        seen.add(text)
        docs.append(Document(f"d{len(docs):06d}", text))
    return Corpus(docs)


@dataclass
class SimulationBundle:
    queries: List[QueryRecord]
    qrels: Qrels
    report: Dict[str, Dict[str, float]]
    level: NoiseLevel
    seed: int


def eligible_docs(corpus: Corpus, min_chars: int = 8, max_chars: int = 50) -> List[str]:
    return [d.doc_id for d in corpus if min_chars <= len(d.text) <= max_chars]


def simulate(
    corpus: Corpus,
    level: NoiseLevel,
    n_queries: int,
    seed: int = 0,
    min_chars: int = 8,
    max_chars: int = 50,
) -> SimulationBundle:
    """Sample gold lines and pass each through the noise channel."""
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    pool = eligible_docs(corpus, min_chars, max_chars)
    if len(pool) < n_queries:
        raise ValueError(f"only {len(pool)} documents are eligible ({min_chars}-{max_chars} chars), {n_queries} requested")
    rng = np.random.default_rng(derive_seed(seed, "simulate-golds"))
    picks = rng.choice(len(pool), size=n_queries, replace=False)
    width = len(str(n_queries - 1))
    queries = []
    for i, p in enumerate(picks):
        gold = pool[p]
        text = corrupt_query(corpus[gold].text, level, derive_seed(seed, "simulate-noise", i))
        queries.append(QueryRecord(f"q{i:0{width}d}", text, (), frozenset([gold])))
    return SimulationBundle(
        queries=queries,
        qrels=Qrels.from_gold(queries),
        report=faithfulness_report(queries, corpus),
        level=level,
        seed=seed,
    )
