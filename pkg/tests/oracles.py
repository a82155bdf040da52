"""Reference implementations written independently of the package.

They favour obviousness over speed: recursion, brute force and plain
loops, so a disagreement points at the package code.
"""

import math
from functools import lru_cache


def levenshtein(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def lcs_subsequence(a, b):
    @lru_cache(maxsize=None)
    def f(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + f(i + 1, j + 1)
        return max(f(i + 1, j), f(i, j + 1))

    return f(0, 0)


def lcs_substring(a, b):
    best = 0
    for i in range(len(a)):
        for j in range(i + 1, len(a) + 1):
            if a[i:j] in b:
                best = max(best, j - i)
    return best


def edit_sim(a, b):
    return 1 - levenshtein(a, b) / max(len(a), len(b))


def rouge_l_f1(a, b):
    lcs = lcs_subsequence(a, b)
    if lcs == 0:
        return 0.0
    p = lcs / len(a)
    r = lcs / len(b)
    return 2 * p * r / (p + r)


def bm25(docs, query_tokens, k1=1.2, b=0.75):
    """docs: {doc_id: token list}. Returns {doc_id: score} for every doc."""
    N = len(docs)
    avgdl = sum(len(t) for t in docs.values()) / N
    out = {}
    for d, toks in docs.items():
        s = 0.0
        for t in query_tokens:
            df = sum(1 for other in docs.values() if t in other)
            if df == 0:
                continue
            idf = math.log(1 + (N - df + 0.5) / (df + 0.5))
            tf = toks.count(t)
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks) / avgdl))
        out[d] = s
    return out


def anchored(base, hyps, alpha):
    """base: {doc: score}; hyps: list of {doc: score}. Zero policy, full candidate union."""
    docs = set(base)
    for h in hyps:
        docs |= set(h)
    out = {}
    for d in docs:
        best = max(h.get(d, 0.0) for h in hyps)
        out[d] = alpha * base.get(d, 0.0) + (1 - alpha) * best
    return out


def ranked(scores):
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def recall(ranking, grades, M):
    rel = [d for d, g in grades.items() if g > 0]
    hits = 0
    for d in ranking[:M]:
        if d in rel:
            hits += 1
    return hits / len(rel)


def mrr(ranking, grades, M):
    for i in range(min(M, len(ranking))):
        if grades.get(ranking[i], 0) > 0:
            return 1 / (i + 1)
    return 0.0


def ndcg(ranking, grades, M):
    dcg = 0.0
    for i in range(min(M, len(ranking))):
        dcg += (2 ** grades.get(ranking[i], 0) - 1) / math.log2(i + 2)
    ideal = sorted(grades.values(), reverse=True)
    idcg = 0.0
    for i in range(min(M, len(ideal))):
        idcg += (2 ** ideal[i] - 1) / math.log2(i + 2)
    return dcg / idcg


def random_score_maps(rng, max_docs=20, max_k=5, ties=True):
    """A base score map and K hypothesis score maps over a shared doc pool (random.Random rng)."""
    pool = [f"d{i:02d}" for i in range(rng.randint(1, max_docs))]
    values = [round(rng.uniform(0, 10), 1) for _ in range(4)] if ties else None

    def one():
        docs = rng.sample(pool, rng.randint(0, len(pool)))
        return {d: (rng.choice(values) if ties and rng.random() < 0.3 else rng.uniform(0, 10)) for d in docs}

    base = one()
    if not base:
        base = {pool[0]: rng.uniform(0, 10)}
    return base, [one() for _ in range(rng.randint(0, max_k))]
