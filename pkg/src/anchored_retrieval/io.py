"""Readers and writers for BEIR-style JSONL, TREC qrels and TREC run files."""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

from .types import Corpus, Document, IntegrityError, QueryRecord, Qrels, RunList

PathLike = Union[str, Path]


class ParseError(ValueError):
    """Malformed input file; the message names the offending line."""


def _iter_jsonl(path: PathLike):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(f"{path}: line {lineno}: expected a JSON object")
            yield lineno, obj


def _require_str(obj: dict, key: str, path: PathLike, lineno: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or (key == "_id" and not value):
        raise ParseError(f"{path}: line {lineno}: missing or invalid {key!r}")
    return value


def load_corpus(path: PathLike) -> Corpus:
    docs = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        doc_id = _require_str(obj, "_id", path, lineno)
        text = _require_str(obj, "text", path, lineno)
        title = obj.get("title") or None
        if doc_id in seen:
            raise IntegrityError(f"{path}: line {lineno}: duplicate _id {doc_id!r}")
        seen.add(doc_id)
        try:
            docs.append(Document(doc_id, text, title))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    if not docs:
        raise ValueError(f"{path}: empty corpus")
    return Corpus(docs)


def load_queries(path: PathLike) -> List[QueryRecord]:
    records = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        qid = _require_str(obj, "_id", path, lineno)
        text = _require_str(obj, "text", path, lineno)
        hyps = obj.get("hypotheses") or []
        gold = obj.get("gold")
        if not isinstance(hyps, list) or not all(isinstance(h, str) for h in hyps):
            raise ParseError(f"{path}: line {lineno}: 'hypotheses' must be a list of strings")
        if gold is not None and not isinstance(gold, list):
            raise ParseError(f"{path}: line {lineno}: 'gold' must be a list")
        if qid in seen:
            raise IntegrityError(f"{path}: line {lineno}: duplicate _id {qid!r}")
        seen.add(qid)
        records.append(QueryRecord(qid, text, tuple(hyps), None if gold is None else frozenset(gold)))
    return records


def write_corpus(corpus: Corpus, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus:
            obj = {"_id": d.doc_id, "text": d.text}
            if d.title:
                obj["title"] = d.title
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_queries(queries: Iterable[QueryRecord], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            obj = {"_id": q.qid, "text": q.text}
            if q.hypotheses:
                obj["hypotheses"] = list(q.hypotheses)
            if q.gold is not None:
                obj["gold"] = sorted(q.gold)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_qrels(path: PathLike) -> Qrels:
    judgments: Dict[str, Dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            # BEIR ships qrels with a "query-id corpus-id score" header
            if lineno == 1 and parts[0] == "query-id":
                continue
            # TREC: qid iter docid grade; BEIR: qid docid grade
            if len(parts) == 4:
                qid, _, doc_id, grade_s = parts
            elif len(parts) == 3:
                qid, doc_id, grade_s = parts
            else:
                raise ParseError(f"{path}: line {lineno}: expected 3 or 4 columns, got {len(parts)}")
            try:
                grade = int(grade_s)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: grade {grade_s!r} is not an integer") from None
            if grade < 0:
                raise ValueError(f"{path}: line {lineno}: negative grade {grade}")
            judgments.setdefault(qid, {})[doc_id] = grade
    return Qrels(judgments)


def write_qrels(qrels: Qrels, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in qrels.qids():
            for doc_id, grade in sorted(qrels.judgments[qid].items()):
                fh.write(f"{qid}\t0\t{doc_id}\t{grade}\n")


def format_score(score: float) -> str:
    # 17 significant digits round-trips any IEEE double exactly
    return format(score, ".17g")


def write_run(runs: Sequence[RunList], path: PathLike, tag: str = "run") -> None:
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"run tag must be a non-empty token, got {tag!r}")
    with open(path, "w", encoding="utf-8") as fh:
        for run in runs:
            for rank, (doc_id, score) in enumerate(run.entries, start=1):
                fh.write(f"{run.qid} Q0 {doc_id} {rank} {format_score(score)} {tag}\n")


def read_run(path: PathLike) -> List[RunList]:
    grouped: "OrderedDict[str, list]" = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(f"{path}: line {lineno}: expected 6 columns, got {len(parts)}")
            qid, _, doc_id, rank_s, score_s, _ = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad rank or score") from None
            grouped.setdefault(qid, []).append((rank, doc_id, score, lineno))
    runs = []
    for qid, rows in grouped.items():
        for expected, (rank, _, _, lineno) in enumerate(rows, start=1):
            if rank != expected:
                raise ValueError(f"{path}: line {lineno}: rank {rank} out of order for {qid!r} (expected {expected})")
        run = RunList(qid, tuple((d, s) for _, d, s, _ in rows))
        if run.doc_ids != [d for _, d, _, _ in rows]:
            raise ValueError(f"{path}: ranks for {qid!r} disagree with score order")
        runs.append(run)
    return runs
