"""End-to-end experiment driver: index, hypothesize, retrieve, aggregate, evaluate, sweep.

A pipeline is described by one TOML file. Relative paths resolve against
the file's directory. Example::

    corpus = "corpus.jsonl"
    queries = "queries.jsonl"
    qrels = "qrels.tsv"
    output_dir = "out"
    seed = 13

    [retriever]
    kind = "lexical"
    tokenizer = "mixed"

    [provider]
    kind = "oracle"
    k = 5
    level = "L3"

    [aggregation]
    alpha = 0.8
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import tomli

from .aggregation import AggregationConfig, aggregate_table, alpha_grid
from .dense import EmbeddingSource, VectorIndex
from .experiments import _tables, rows_to_csv, sweep_alpha
from .hypotheses import CorruptorProvider, HypothesisProvider, LLMProvider, LLMSettings, PrecomputedProvider, attach_hypotheses
from .io import load_corpus, load_qrels, load_queries, write_queries, write_run
from .lexical import build_lexical_index
from .metrics import compare_runs, evaluate_run
from .retrieve import DenseRetriever, FileEncoder, LexicalRetriever, ServiceEncoder, build_bundles, build_rescorers, slot_runs
from .tokenize import Tokenizer
from .types import Corpus, check_gold

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, Any] = {
    "output_dir": "out",
    "seed": 0,
    "cutoffs": [1, 5, 10],
    "rank_cutoff": 10,
    "jobs": 1,
    "sweep": True,
    "retriever": {"kind": "lexical", "k1": 1.2, "b": 0.75, "tokenizer": "mixed", "depth": 100},
    "provider": {"kind": "precomputed", "k": 5, "level": "L3"},
    "aggregation": {"alpha": 0.8, "pooling": "anchored-max", "depth": 100, "normalize": False},
}

PATH_KEYS = ("corpus", "queries", "qrels")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(item: str) -> Tuple[List[str], Any]:
    """``a.b=value`` -> (["a", "b"], parsed value); the value is read as TOML when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


@dataclass
class PipelineConfig:
    raw: Dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_file(cls, path, overrides: Sequence[str] = ()) -> "PipelineConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
        return cls.from_dict(raw, path.resolve().parent, overrides)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], base_dir=".", overrides: Sequence[str] = ()) -> "PipelineConfig":
        merged = _merge(DEFAULTS, raw)
        for item in overrides:
            keys, value = parse_override(item)
            node = merged
            for k in keys[:-1]:
                node = node.setdefault(k, {})
            node[keys[-1]] = value
        return cls(merged, Path(base_dir))

    def path(self, key: str, section: Optional[str] = None) -> Optional[Path]:
        value = (self.raw.get(section) or {}).get(key) if section else self.raw.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> Path:
        return self.path("output_dir")

    def validate(self) -> None:
        for key in PATH_KEYS:
            p = self.path(key)
            if p is None:
                raise ConfigError(f"missing required path {key!r}")
            if not p.exists():
                raise ConfigError(f"{key} path does not exist: {p}")
        retr = self.raw["retriever"]
        if retr["kind"] not in ("lexical", "dense"):
            raise ConfigError(f"unknown retriever kind {retr['kind']!r}")
        if retr["kind"] == "dense":
            for key in ("doc_embeddings", "query_embeddings"):
                p = self.path(key, "retriever")
                if p is not None and not p.exists():
                    raise ConfigError(f"retriever.{key} does not exist: {p}")
            if self.path("doc_embeddings", "retriever") is None and not retr.get("service_url"):
                raise ConfigError("dense retriever needs doc_embeddings or service_url")
        prov = self.raw["provider"]
        if prov["kind"] not in ("precomputed", "file", "oracle", "llm"):
            raise ConfigError(f"unknown provider kind {prov['kind']!r}")
        if prov["kind"] == "llm" and not (prov.get("url") and prov.get("model")):
            raise ConfigError("llm provider needs url and model")
        if retr["kind"] == "dense" and not retr.get("query_embeddings") and not retr.get("service_url"):
            raise ConfigError("dense retriever needs query_embeddings or service_url")
        self.aggregation_config()

    def aggregation_config(self) -> AggregationConfig:
        agg = self.raw["aggregation"]
        default_missing = "zero" if self.raw["retriever"]["kind"] == "lexical" else "exact-rescore"
        missing = {"rescore": "exact-rescore"}.get(agg.get("missing"), agg.get("missing") or default_missing)
        try:
            return AggregationConfig(
                alpha=float(agg["alpha"]),
                pooling=agg["pooling"],
                missing_score_policy=missing,
                output_depth=int(agg["depth"]),
                normalize=bool(agg["normalize"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def resolved(self) -> Dict[str, Any]:
        out = copy.deepcopy(self.raw)
        for key in PATH_KEYS + ("output_dir",):
            if key in out:
                out[key] = str(self.path(key))
        return out


def make_provider(cfg: PipelineConfig) -> HypothesisProvider:
    p = cfg.raw["provider"]
    k = int(p["k"])
    if p["kind"] in ("precomputed", "file"):
        return PrecomputedProvider(k)
    if p["kind"] == "oracle":
        return CorruptorProvider(k, p.get("level", "L3"), seed=cfg.seed)
    settings = LLMSettings(
        url=p["url"],
        model=p["model"],
        template=p.get("template", "generic"),
        token_env=p.get("token_env", "LLM_API_KEY"),
        temperature=float(p.get("temperature", 0.7)),
        max_tokens=int(p.get("max_tokens", 512)),
        timeout=float(p.get("timeout", 60.0)),
        retries=int(p.get("retries", 2)),
        max_in_flight=int(p.get("max_in_flight", 4)),
    )
    return LLMProvider(settings, k)


def make_retriever(cfg: PipelineConfig, corpus: Corpus):
    r = cfg.raw["retriever"]
    depth = int(r["depth"])
    if r["kind"] == "lexical":
        index = build_lexical_index(corpus, Tokenizer(r["tokenizer"]), float(r["k1"]), float(r["b"]))
        return LexicalRetriever(index, depth)
    if r.get("doc_embeddings"):
        source = EmbeddingSource("file", path=str(cfg.path("doc_embeddings", "retriever")))
    else:
        source = EmbeddingSource("service", url=r["service_url"], model=r["model"], token_env=r.get("token_env"))
    index = VectorIndex.build(source, corpus.doc_ids, [d.full_text for d in corpus])
    if r.get("query_embeddings"):
        encoder = FileEncoder(str(cfg.path("query_embeddings", "retriever")))
    else:
        encoder = ServiceEncoder(EmbeddingSource("service", url=r["service_url"], model=r["model"], token_env=r.get("token_env")))
    return DenseRetriever(index, encoder, depth)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Manifest:
    def __init__(self, cfg: PipelineConfig):
        self.out = cfg.output_dir
        self.data: Dict[str, Any] = {
            "seed": cfg.seed,
            "config": cfg.resolved(),
            "stages": [],
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }

    def stage(self, name: str, status: str, files: Sequence[Path] = (), error: Optional[str] = None) -> None:
        entry: Dict[str, Any] = {"name": name, "status": status, "files": []}
        for f in files:
            entry["files"].append({"path": f.name, "sha256": sha256_file(f), "bytes": f.stat().st_size})
        if error:
            entry["error"] = error
        self.data["stages"].append(entry)

    def write(self) -> Path:
        self.data["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        path = self.out / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path


def run_pipeline(cfg: PipelineConfig) -> Tuple[int, Dict[str, Any]]:
    """Run every stage; returns (exit status, manifest).

    Validation errors raise :class:`ConfigError` before anything is written.
    A failing stage stops the run, keeps earlier artifacts and is marked
    ``failed`` in the manifest.
    """
    cfg.validate()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(cfg)
    seed = cfg.seed
    agg_cfg = cfg.aggregation_config()
    jobs = int(cfg.raw["jobs"])
    cutoffs = [int(c) for c in cfg.raw["cutoffs"]]
    rank_cutoff = int(cfg.raw["rank_cutoff"])
    state: Dict[str, Any] = {}

    def load():
        corpus = load_corpus(cfg.path("corpus"))
        queries = load_queries(cfg.path("queries"))
        check_gold(queries, corpus)
        state.update(corpus=corpus, queries=queries, qrels=load_qrels(cfg.path("qrels")))
        return []

    def index():
        state["retriever"] = make_retriever(cfg, state["corpus"])
        retr = state["retriever"]
        if isinstance(retr, LexicalRetriever):
            path = out / "index.bm25.json"
            retr.index.save(path)
        else:
            path = out / "index.flatip.npz"
            retr.index.save(path)
        return [path]

    def hypothesize():
        queries = attach_hypotheses(make_provider(cfg), state["queries"], jobs)
        state["queries"] = queries
        path = out / "queries.hypotheses.jsonl"
        write_queries(queries, path)
        return [path]

    def retrieve():
        bundles = build_bundles(state["retriever"], state["queries"], jobs)
        state["bundles"] = bundles
        if agg_cfg.missing_score_policy == "exact-rescore":
            state["rescorers"] = build_rescorers(state["retriever"], state["queries"])
        paths = []
        for k, runs in enumerate(slot_runs(bundles)):
            name = "base" if k == 0 else f"hyp_{k}"
            path = out / f"{name}.run"
            write_run(runs, path, tag=f"{name}-s{seed}")
            paths.append(path)
        return paths

    def aggregate():
        tables = _tables(state["bundles"], agg_cfg, state.get("rescorers"))
        state["aggregated"] = [aggregate_table(t, b, agg_cfg) for b, t in zip(state["bundles"], tables)]
        path = out / "aggregated.run"
        write_run(state["aggregated"], path, tag=f"{agg_cfg.tag}-s{seed}")
        return [path]

    def evaluate():
        qrels = state["qrels"]
        base = [b.base_run for b in state["bundles"]]
        report: Dict[str, Any] = {
            "seed": seed,
            "aggregation": agg_cfg.tag,
            "base": evaluate_run(base, qrels, cutoffs, rank_cutoff),
            "aggregated": evaluate_run(state["aggregated"], qrels, cutoffs, rank_cutoff),
            "significance": {},
        }
        for metric in ("mrr", "ndcg"):
            try:
                test = compare_runs(base, state["aggregated"], qrels, metric, rank_cutoff).test
            except ValueError:
                continue
            report["significance"][metric] = {"n": test.n, "t": test.t_stat, "p": test.p_value, "mean_diff": test.mean_diff}
        json_path = out / "report.json"
        json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rows = [{"system": "base", **report["base"]}, {"system": "aggregated", **report["aggregated"]}]
        csv_path = out / "report.csv"
        csv_path.write_text(rows_to_csv(rows), encoding="utf-8")
        return [json_path, csv_path]

    def sweep():
        rows = sweep_alpha(state["bundles"], agg_cfg, state["qrels"], alpha_grid(), state.get("rescorers"), cutoffs, rank_cutoff)
        path = out / "alpha_sweep.csv"
        path.write_text(rows_to_csv(rows), encoding="utf-8")
        return [path]

    stages = [("load", load), ("index", index), ("hypothesize", hypothesize), ("retrieve", retrieve), ("aggregate", aggregate), ("evaluate", evaluate)]
    if cfg.raw.get("sweep", True):
        stages.append(("sweep", sweep))

    status = 0
    for name, fn in stages:
        try:
            files = fn()
        except Exception as exc:  # recorded in the manifest, then surfaced via the exit status
            log.error("stage %s failed: %s", name, exc)
            manifest.stage(name, "failed", error=f"{type(exc).__name__}: {exc}")
            status = 1
            break
        manifest.stage(name, "ok", files)
    manifest.write()
    return status, manifest.data


def write_simulation(bundle, out_dir, corpus: Optional[Corpus] = None) -> List[Path]:
    """Write a simulated benchmark: queries, single-gold qrels and the faithfulness report."""
    from .faithfulness import report_to_csv
    from .io import write_corpus, write_qrels

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if corpus is not None:
        write_corpus(corpus, out / "corpus.jsonl")
        paths.append(out / "corpus.jsonl")
    write_queries(bundle.queries, out / "queries.jsonl")
    write_qrels(bundle.qrels, out / "qrels.tsv")
    report = {"seed": bundle.seed, "level": bundle.level.label, "metrics": bundle.report}
    (out / "faithfulness.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "faithfulness.csv").write_text(report_to_csv(bundle.report), encoding="utf-8")
    paths += [out / n for n in ("queries.jsonl", "qrels.tsv", "faithfulness.json", "faithfulness.csv")]
    return paths
