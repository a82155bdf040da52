"""Okapi BM25 over an in-memory inverted index."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .tokenize import Tokenizer
from .types import Corpus, RunList

log = logging.getLogger(__name__)

INDEX_MAGIC = "anchored-retrieval/bm25-index"
INDEX_VERSION = 1


@dataclass
class LexicalIndex:
    doc_ids: List[str]
    postings: Dict[str, List[Tuple[int, int]]]
    doc_lengths: List[int]
    avg_doc_len: float
    k1: float
    b: float
    tokenizer: Tokenizer

    @cached_property
    def position_of(self) -> Dict[str, int]:
        return {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def N(self) -> int:
        return len(self.doc_lengths)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            "magic": INDEX_MAGIC,
            "version": INDEX_VERSION,
            "k1": self.k1,
            "b": self.b,
            "tokenizer": self.tokenizer.to_dict(),
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [list(p) for p in plist] for t, plist in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LexicalIndex":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("magic") != INDEX_MAGIC:
            raise ValueError(f"{path}: not a BM25 index file")
        if payload.get("version") != INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {payload.get('version')!r}")
        lengths = payload["doc_lengths"]
        return cls(
            doc_ids=payload["doc_ids"],
            postings={t: [tuple(p) for p in plist] for t, plist in payload["postings"].items()},
            doc_lengths=lengths,
            avg_doc_len=sum(lengths) / len(lengths),
            k1=payload["k1"],
            b=payload["b"],
            tokenizer=Tokenizer(**payload["tokenizer"]),
        )


def build_lexical_index(
    corpus: Corpus,
    tokenizer: Optional[Tokenizer] = None,
    k1: float = 1.2,
    b: float = 0.75,
) -> LexicalIndex:
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if k1 <= 0:
        raise ValueError(f"k1 must be positive, got {k1}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must lie in [0, 1], got {b}")
    tokenizer = tokenizer or Tokenizer()

    postings: Dict[str, List[Tuple[int, int]]] = {}
    lengths: List[int] = []
    for pos, doc in enumerate(corpus):
        tokens = tokenizer(doc.full_text)
        lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((pos, tf))
    if not any(lengths):
        log.warning("every document tokenized to nothing; all BM25 scores will be 0")
    return LexicalIndex(
        doc_ids=corpus.doc_ids,
        postings=postings,
        doc_lengths=lengths,
        avg_doc_len=sum(lengths) / len(lengths),
        k1=k1,
        b=b,
        tokenizer=tokenizer,
    )


def _accumulate(index: LexicalIndex, tokens: Iterable[str], allowed: Optional[set]) -> Dict[int, float]:
    k1, b, avgdl = index.k1, index.b, index.avg_doc_len
    acc: Dict[int, float] = {}
    for term in tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for pos, tf in plist:
            if allowed is not None and pos not in allowed:
                continue
            norm = k1 * (1.0 - b + b * index.doc_lengths[pos] / avgdl)
            acc[pos] = acc.get(pos, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
    return acc


def score_lexical(
    index: LexicalIndex,
    query_text: str,
    candidates: Optional[Iterable[str]] = None,
    depth: Optional[int] = None,
    qid: str = "",
) -> RunList:
    """Score ``query_text`` with BM25.

    Without ``candidates`` only documents sharing at least one term are
    returned. With ``candidates`` exactly those documents are returned,
    zero scores included. ``depth`` truncates the ranked list.
    """
    tokens = index.tokenizer(query_text)
    if candidates is None:
        acc = _accumulate(index, tokens, None)
        scores = {index.doc_ids[p]: s for p, s in acc.items() if s > 0.0}
    else:
        lookup = index.position_of
        positions = {}
        for d in candidates:
            if d not in lookup:
                raise KeyError(f"candidate {d!r} is not in the index")
            positions[lookup[d]] = d
        acc = _accumulate(index, tokens, set(positions))
        scores = {d: acc.get(p, 0.0) for p, d in positions.items()}
    run = RunList.from_scores(qid, scores)
    return run.truncate(depth) if depth is not None else run
