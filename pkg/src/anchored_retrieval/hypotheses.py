"""Recovery-hypothesis providers.

A provider maps one observed query to at most ``k`` alternative query
strings. Three kinds are available:

* :class:`PrecomputedProvider` reads hypotheses already stored on the record;
* :class:`LLMProvider` asks a chat-completion endpoint using a prompt template;
* :class:`CorruptorProvider` draws ``k`` seeded noisy variants of the query.

:class:`GoldCorruptorProvider` corrupts the hidden gold text instead. It
cannot be used on real queries and exists only for upper-bound diagnostics.
"""

from __future__ import annotations

import logging
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence

import requests

from .noise import NoiseLevel, corrupt_query, get_level
from .seeding import derive_seed
from .types import Corpus, QueryRecord, dedup_hypotheses

log = logging.getLogger(__name__)

TEMPLATES = ("lyrics", "generic", "fiqa", "scifact", "nfcorpus")


class ProviderError(RuntimeError):
    def __init__(self, qid: str, message: str):
        super().__init__(f"query {qid!r}: {message}")
        self.qid = qid


def load_template(name: str) -> str:
    if name not in TEMPLATES:
        raise ValueError(f"unknown prompt template {name!r}; expected one of {TEMPLATES}")
    return resources.files("anchored_retrieval.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render_prompt(template: str, query: str, k: int) -> str:
    # plain replacement: queries may contain braces
    return template.replace("{k}", str(k)).replace("{lyric}", query).replace("{query}", query)


def _cap(hypotheses: Sequence[str], k: int) -> List[str]:
    return dedup_hypotheses(hypotheses)[:k]


class HypothesisProvider:
    kind = "base"

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k

    def generate(self, query: QueryRecord) -> List[str]:
        raise NotImplementedError


class PrecomputedProvider(HypothesisProvider):
    kind = "precomputed"

    def generate(self, query: QueryRecord) -> List[str]:
        return _cap(query.hypotheses, self.k)


class CorruptorProvider(HypothesisProvider):
    """``k`` distinct seeded noisy variants of the observed query.

    Fewer than ``k`` come back only when the channel cannot produce that
    many distinct strings (e.g. an all-zero noise level).
    """

    kind = "oracle-corruptor"

    def __init__(self, k: int = 5, level: NoiseLevel | str = "L1", seed: int = 0):
        super().__init__(k)
        self.level = get_level(level) if isinstance(level, str) else level
        self.seed = seed

    max_draws_per_slot = 10

    def _variants(self, qid: str, text: str) -> List[str]:
        # duplicate draws are replaced by fresh ones, within a bounded budget
        key = zlib.crc32(qid.encode("utf-8"))
        out: List[str] = []
        for j in range(self.k * self.max_draws_per_slot):
            h = corrupt_query(text, self.level, derive_seed(self.seed, "hypotheses", key, j))
            if h not in out:
                out.append(h)
                if len(out) == self.k:
                    break
        return out

    def generate(self, query: QueryRecord) -> List[str]:
        return _cap(self._variants(query.qid, query.text), self.k)


class GoldCorruptorProvider(CorruptorProvider):
    kind = "gold-corruptor"
    diagnostic = True

    def __init__(self, corpus: Corpus, k: int = 5, level: NoiseLevel | str = "L1", seed: int = 0):
        super().__init__(k, level, seed)
        self.corpus = corpus
        log.warning("gold-corruptor reads hidden gold targets; use only for upper-bound diagnostics")

    def generate(self, query: QueryRecord) -> List[str]:
        if not query.gold:
            raise ProviderError(query.qid, "gold-corruptor needs a gold document")
        gold = sorted(query.gold)[0]
        return _cap(self._variants(query.qid, self.corpus[gold].text), self.k)


@dataclass
class LLMSettings:
    url: str
    model: str
    template: str = "generic"
    token_env: Optional[str] = "LLM_API_KEY"
    temperature: float = 0.7
    max_tokens: int = 512
    timeout: float = 60.0
    retries: int = 2
    max_in_flight: int = 4


def parse_completion(text: str) -> List[str]:
    """One hypothesis per non-empty line, surrounding quotes stripped."""
    out = []
    for line in text.splitlines():
        line = line.strip().strip('"').strip("“”").strip()
        if line:
            out.append(line)
    return out


class LLMProvider(HypothesisProvider):
    kind = "llm-service"

    def __init__(self, settings: LLMSettings, k: int = 5, session: Optional[requests.Session] = None):
        super().__init__(k)
        self.settings = settings
        self.template = load_template(settings.template)
        self.session = session or requests.Session()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.settings.token_env) if self.settings.token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def request_body(self, query: QueryRecord) -> dict:
        return {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": render_prompt(self.template, query.text, self.k)}],
            "temperature": self.settings.temperature,
            "max_tokens": self.settings.max_tokens,
        }

    def generate(self, query: QueryRecord) -> List[str]:
        body = self.request_body(query)
        error = "no attempt made"
        for attempt in range(self.settings.retries + 1):
            try:
                resp = self.session.post(self.settings.url, json=body, headers=self._headers(), timeout=self.settings.timeout)
                if 200 <= resp.status_code < 300:
                    content = resp.json()["choices"][0]["message"]["content"]
                    return _cap(parse_completion(content or ""), self.k)
                error = f"HTTP {resp.status_code}"
            except requests.RequestException as exc:
                error = str(exc)
            except (KeyError, IndexError, TypeError, ValueError):
                raise ProviderError(query.qid, "malformed chat-completion response") from None
            if attempt < self.settings.retries:
                time.sleep(min(0.2 * 2**attempt, 2.0))
        raise ProviderError(query.qid, f"LLM service failed: {error}")


def generate_hypotheses(provider: HypothesisProvider, query: QueryRecord) -> List[str]:
    return provider.generate(query)[: provider.k]


def attach_hypotheses(provider: HypothesisProvider, queries: Sequence[QueryRecord], jobs: int = 1) -> List[QueryRecord]:
    """Return copies of ``queries`` carrying freshly generated hypotheses, input order kept."""
    if isinstance(provider, LLMProvider):
        limit = provider.settings.max_in_flight
        jobs = limit if jobs <= 1 else min(jobs, limit)
    if jobs <= 1:
        results = [generate_hypotheses(provider, q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda q: generate_hypotheses(provider, q), queries))
    return [q.with_hypotheses(h) for q, h in zip(queries, results)]
