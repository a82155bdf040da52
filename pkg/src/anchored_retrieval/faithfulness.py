"""Character-level similarity between an observed query and its target."""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from typing import Dict, Iterable, List

from .types import Corpus, QueryRecord

log = logging.getLogger(__name__)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def lcs_subsequence(a: str, b: str) -> int:
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def lcs_substring(a: str, b: str) -> int:
    best = 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            run = prev[j - 1] + 1 if ca == cb else 0
            cur.append(run)
            if run > best:
                best = run
        prev = cur
    return best


def edit_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def rouge_l_char_f1(a: str, b: str) -> float:
    lcs = lcs_subsequence(a, b)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(a), lcs / len(b)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class FaithfulnessStats:
    rouge_l_char_f1: float
    edit_sim: float
    lcs_len: int
    len_q: int
    len_target: int


def faithfulness(q: str, target: str) -> FaithfulnessStats:
    if not q or not target:
        raise ValueError("faithfulness needs two non-empty strings")
    return FaithfulnessStats(
        rouge_l_char_f1=rouge_l_char_f1(q, target),
        edit_sim=edit_similarity(q, target),
        lcs_len=lcs_substring(q, target),
        len_q=len(q),
        len_target=len(target),
    )


REPORT_METRICS = ("rouge_l_char_f1", "edit_sim", "lcs_len", "len_q", "len_target")


def summarize(values: List[float]) -> Dict[str, float]:
    return {
        "mean": statistics.fmean(values),
        "median": statistics.median(values),
        "std": statistics.pstdev(values),
        "min": min(values),
        "max": max(values),
    }


def faithfulness_report(queries: Iterable[QueryRecord], corpus: Corpus) -> Dict[str, Dict[str, float]]:
    """Mean/median/std/min/max of every faithfulness statistic over single-gold queries."""
    rows: List[FaithfulnessStats] = []
    for q in queries:
        if not q.gold or len(q.gold) != 1:
            log.warning("query %s skipped: needs exactly one gold document", q.qid)
            continue
        (gold,) = q.gold
        rows.append(faithfulness(q.text, corpus[gold].text))
    if not rows:
        raise ValueError("no evaluable queries")
    report = {m: summarize([getattr(r, m) for r in rows]) for m in REPORT_METRICS}
    report["n"] = {"count": len(rows)}
    return report


def report_to_csv(report: Dict[str, Dict[str, float]]) -> str:
    lines = ["metric,mean,median,std,min,max"]
    for m in REPORT_METRICS:
        s = report[m]
        lines.append(",".join([m] + [format(s[k], ".6g") for k in ("mean", "median", "std", "min", "max")]))
    return "\n".join(lines) + "\n"
