"""Core value types shared across retrieval, aggregation and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple


class IntegrityError(ValueError):
    """Raised when a collection violates a uniqueness or membership rule."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text and not self.title:
            raise ValueError(f"document {self.doc_id!r} has neither text nor title")

    @property
    def full_text(self) -> str:
        if self.title:
            return f"{self.title} {self.text}".strip()
        return self.text


class Corpus:
    """Ordered, immutable collection of documents with id lookup."""

    def __init__(self, docs: Iterable[Document]):
        self._docs: Tuple[Document, ...] = tuple(docs)
        if not self._docs:
            raise ValueError("empty corpus")
        by_id: Dict[str, int] = {}
        for pos, doc in enumerate(self._docs):
            if doc.doc_id in by_id:
                raise IntegrityError(f"duplicate doc_id {doc.doc_id!r}")
            by_id[doc.doc_id] = pos
        self._by_id = by_id

    @property
    def docs(self) -> Tuple[Document, ...]:
        return self._docs

    @property
    def doc_ids(self) -> List[str]:
        return [d.doc_id for d in self._docs]

    def position(self, doc_id: str) -> int:
        return self._by_id[doc_id]

    def __getitem__(self, doc_id: str) -> Document:
        return self._docs[self._by_id[doc_id]]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._by_id

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self):
        return iter(self._docs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Corpus) and self._docs == other._docs

    def __repr__(self) -> str:
        return f"Corpus(N={len(self._docs)})"


def dedup_hypotheses(hypotheses: Iterable[str]) -> List[str]:
    """Trim each hypothesis, drop empties and exact repeats, keep first-seen order."""
    seen = set()
    out = []
    for h in hypotheses:
        h = h.strip()
        if h and h not in seen:
            seen.add(h)
            out.append(h)
    return out


@dataclass(frozen=True)
class QueryRecord:
    qid: str
    text: str
    hypotheses: Tuple[str, ...] = ()
    gold: Optional[frozenset] = None

    def __post_init__(self) -> None:
        if not self.qid:
            raise ValueError("qid must be non-empty")
        object.__setattr__(self, "hypotheses", tuple(dedup_hypotheses(self.hypotheses)))
        if self.gold is not None:
            object.__setattr__(self, "gold", frozenset(self.gold))

    def with_hypotheses(self, hypotheses: Sequence[str]) -> "QueryRecord":
        return QueryRecord(self.qid, self.text, tuple(hypotheses), self.gold)


def check_gold(queries: Sequence[QueryRecord], corpus: Corpus) -> None:
    for q in queries:
        for d in q.gold or ():
            if d not in corpus:
                raise IntegrityError(f"query {q.qid!r}: gold doc {d!r} not in corpus")


@dataclass(frozen=True)
class Qrels:
    """Graded judgments ``qid -> {doc_id: grade}``; unjudged pairs have grade 0."""

    judgments: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for qid, docs in self.judgments.items():
            for doc_id, grade in docs.items():
                if not isinstance(grade, int) or grade < 0:
                    raise ValueError(f"invalid grade {grade!r} for ({qid}, {doc_id})")

    def grade(self, qid: str, doc_id: str) -> int:
        return self.judgments.get(qid, {}).get(doc_id, 0)

    def relevant(self, qid: str) -> Dict[str, int]:
        """Docs with grade > 0 for ``qid``."""
        return {d: g for d, g in self.judgments.get(qid, {}).items() if g > 0}

    def qids(self) -> List[str]:
        return sorted(self.judgments)

    def __contains__(self, qid: object) -> bool:
        return qid in self.judgments

    @classmethod
    def from_gold(cls, queries: Iterable[QueryRecord]) -> "Qrels":
        return cls({q.qid: {d: 1 for d in sorted(q.gold)} for q in queries if q.gold})


def _rank_key(entry: Tuple[str, float]) -> Tuple[float, str]:
    return (-entry[1], entry[0])


@dataclass(frozen=True)
class RunList:
    """Ranked ``(doc_id, score)`` list for one query.

    Entries are always held in descending score order, ties broken by
    ascending doc_id, whatever order they were supplied in.
    """

    qid: str
    entries: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        entries = tuple((str(d), float(s)) for d, s in self.entries)
        seen = set()
        for doc_id, score in entries:
            if doc_id in seen:
                raise IntegrityError(f"run {self.qid!r}: duplicate doc_id {doc_id!r}")
            if not math.isfinite(score):
                raise ValueError(f"run {self.qid!r}: non-finite score for {doc_id!r}")
            seen.add(doc_id)
        object.__setattr__(self, "entries", tuple(sorted(entries, key=_rank_key)))

    @classmethod
    def from_scores(cls, qid: str, scores: Mapping[str, float]) -> "RunList":
        return cls(qid, tuple(scores.items()))

    @property
    def doc_ids(self) -> List[str]:
        return [d for d, _ in self.entries]

    def scores(self) -> Dict[str, float]:
        return dict(self.entries)

    def truncate(self, depth: int) -> "RunList":
        return RunList(self.qid, self.entries[:depth])

    def __len__(self) -> int:
        return len(self.entries)
