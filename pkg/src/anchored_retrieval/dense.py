"""Exact inner-product search over L2-normalized embeddings.

Embeddings come either from a TSV file (``dim=<d>`` header, then one
``id<TAB>v1<TAB>...<TAB>vd`` row per item) or from an OpenAI-compatible
``/embeddings`` HTTP endpoint.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import requests

from .types import RunList

log = logging.getLogger(__name__)

NORM_TOL = 1e-6


class IngestionError(ValueError):
    """Embeddings have the wrong shape or count."""


class EmbeddingDataError(ValueError):
    """An embedding cannot be normalized (zero vector)."""


class TransportError(RuntimeError):
    """The embedding service failed after all retries."""


@dataclass(frozen=True)
class EmbeddingSource:
    kind: str  # "file" or "service"
    path: Optional[str] = None
    url: Optional[str] = None
    model: Optional[str] = None
    token_env: Optional[str] = None
    batch_size: int = 64
    timeout: float = 30.0
    retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.kind == "file" and not self.path:
            raise ValueError("file embedding source needs a path")
        if self.kind == "service" and not (self.url and self.model):
            raise ValueError("service embedding source needs url and model")
        if self.kind not in ("file", "service"):
            raise ValueError(f"unknown embedding source kind {self.kind!r}")


def l2_normalize(matrix: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise EmbeddingDataError(f"zero-norm embedding for id {ids[zero[0]]!r}")
    return matrix / norms[:, None]


def read_embedding_file(path: Union[str, Path]) -> Tuple[List[str], np.ndarray]:
    """Raw (un-normalized) rows of an embedding TSV, in file order."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise IngestionError(f"{path}: first line must be 'dim=<d>', got {header!r}")
        dim = int(header[4:])
        ids, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != dim + 1:
                raise IngestionError(f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if len(set(ids)) != len(ids):
        raise IngestionError(f"{path}: duplicate ids")
    return ids, np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def write_embedding_file(path: Union[str, Path], ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={matrix.shape[1]}\n")
        for doc_id, row in zip(ids, matrix):
            fh.write(doc_id + "\t" + "\t".join(format(v, ".17g") for v in row) + "\n")


class EmbeddingServiceClient:
    """Minimal client for an OpenAI-style embeddings endpoint."""

    def __init__(self, source: EmbeddingSource, session: Optional[requests.Session] = None):
        self.source = source
        self.session = session or requests.Session()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.source.token_env:
            token = os.environ.get(self.source.token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def embed_batch(self, texts: Sequence[str]) -> List[List[float]]:
        body = {"model": self.source.model, "input": list(texts)}
        last_error = None
        for attempt in range(self.source.retries + 1):
            try:
                resp = self.session.post(self.source.url, json=body, headers=self._headers(), timeout=self.source.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if 200 <= resp.status_code < 300:
                    return self._parse(resp.json(), len(texts))
                last_error = f"HTTP {resp.status_code}"
            if attempt < self.source.retries:
                time.sleep(min(0.1 * 2**attempt, 2.0))
        raise TransportError(f"embedding service {self.source.url} failed: {last_error}")

    @staticmethod
    def _parse(payload: dict, expected: int) -> List[List[float]]:
        try:
            data = payload["data"]
            if data and all("index" in item for item in data):
                data = sorted(data, key=lambda item: item["index"])
            vectors = [item["embedding"] for item in data]
        except (KeyError, TypeError):
            raise IngestionError("embedding response lacks data[].embedding") from None
        if len(vectors) != expected:
            raise IngestionError(f"embedding service returned {len(vectors)} vectors for {expected} inputs")
        return vectors

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        size = self.source.batch_size
        batches = [texts[i : i + size] for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=max(1, self.source.max_in_flight)) as pool:
            results = list(pool.map(self.embed_batch, batches))
        return [v for batch in results for v in batch]


def ingest_embeddings(
    source: EmbeddingSource,
    ids: Sequence[str],
    texts: Optional[Sequence[str]] = None,
    client: Optional[EmbeddingServiceClient] = None,
) -> np.ndarray:
    """Return one L2-normalized row per id, in the order of ``ids``."""
    if not ids:
        raise ValueError("nothing to embed")
    if texts is not None and len(texts) != len(ids):
        raise ValueError("ids and texts differ in length")

    if source.kind == "file":
        file_ids, matrix = read_embedding_file(source.path)
        if len(file_ids) != len(ids):
            raise IngestionError(f"{source.path}: {len(file_ids)} rows for {len(ids)} ids")
        row_of = {d: i for i, d in enumerate(file_ids)}
        missing = [d for d in ids if d not in row_of]
        if missing:
            raise IngestionError(f"{source.path}: no embedding for id {missing[0]!r}")
        matrix = matrix[[row_of[d] for d in ids]]
    else:
        if texts is None:
            raise ValueError("service ingestion needs texts")
        vectors = (client or EmbeddingServiceClient(source)).embed(list(texts))
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise IngestionError(f"embedding dimension mismatch: {sorted(dims)}")
        matrix = np.array(vectors, dtype=np.float64)
    return l2_normalize(matrix, ids)


class VectorIndex:
    """Flat index; row ``i`` is the unit embedding of ``doc_ids[i]``."""

    def __init__(self, doc_ids: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(doc_ids) or vectors.shape[0] == 0:
            raise ValueError(f"expected a ({len(doc_ids)}, dim) matrix, got shape {vectors.shape}")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValueError("index rows must be L2-normalized")
        self.doc_ids = list(doc_ids)
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.position_of = {d: i for i, d in enumerate(self.doc_ids)}
        if len(self.position_of) != len(self.doc_ids):
            raise ValueError("duplicate doc ids in vector index")
        # rank of each doc id in lexicographic order, used for tie-breaking
        order = sorted(range(len(self.doc_ids)), key=self.doc_ids.__getitem__)
        self._id_rank = np.empty(len(order), dtype=np.int64)
        self._id_rank[order] = np.arange(len(order))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def normalized(self) -> bool:
        return True

    @classmethod
    def build(cls, source: EmbeddingSource, doc_ids: Sequence[str], texts: Optional[Sequence[str]] = None) -> "VectorIndex":
        return cls(doc_ids, ingest_embeddings(source, doc_ids, texts))

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, magic=np.array("anchored-retrieval/flat-ip-index/1"), doc_ids=np.array(self.doc_ids), vectors=self.vectors)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VectorIndex":
        with np.load(path, allow_pickle=False) as z:
            if str(z["magic"]) != "anchored-retrieval/flat-ip-index/1":
                raise ValueError(f"{path}: not a flat vector index")
            return cls([str(d) for d in z["doc_ids"]], z["vectors"])


def score_dense(
    index: VectorIndex,
    query_vec: np.ndarray,
    top_m: int = 100,
    candidates: Optional[Iterable[str]] = None,
    qid: str = "",
) -> RunList:
    """Cosine scores of ``query_vec`` against the index.

    Without ``candidates`` the ``top_m`` best documents are returned; with
    ``candidates`` every listed document is scored exactly.
    """
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query has shape {q.shape}, index dim is {index.dim}")
    if abs(np.linalg.norm(q) - 1.0) > NORM_TOL:
        raise ValueError("query vector must be L2-normalized")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    if candidates is not None:
        positions = []
        for d in candidates:
            if d not in index.position_of:
                raise KeyError(f"candidate {d!r} is not in the index")
            positions.append(index.position_of[d])
        positions = np.array(sorted(set(positions)), dtype=np.int64)
        scores = index.vectors[positions] @ q if positions.size else np.empty(0)
        return RunList.from_scores(qid, {index.doc_ids[p]: float(s) for p, s in zip(positions, scores)})

    scores = index.vectors @ q
    order = np.lexsort((index._id_rank, -scores))[:top_m]
    return RunList(qid, tuple((index.doc_ids[p], float(scores[p])) for p in order))
