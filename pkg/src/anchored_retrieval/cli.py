"""Command-line entry point (``anchored-retrieval``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .aggregation import POOLINGS, AggregationConfig, aggregate_table, alpha_grid, score_table
from .dense import EmbeddingSource, VectorIndex
from .experiments import ablate_k, ablate_pooling, rows_to_csv, rows_to_text, sweep_alpha
from .faithfulness import faithfulness_report, report_to_csv
from .hypotheses import TEMPLATES, CorruptorProvider, LLMProvider, LLMSettings, PrecomputedProvider, attach_hypotheses
from .io import load_corpus, load_qrels, load_queries, read_run, write_queries, write_run
from .lexical import LexicalIndex, build_lexical_index
from .metrics import compare_runs, evaluate_run
from .noise import LEVELS, get_level
from .pipeline import ConfigError, PipelineConfig, run_pipeline, write_simulation
from .retrieve import DenseRetriever, FileEncoder, LexicalRetriever, ServiceEncoder, build_bundles, bundles_from_slots, slot_runs
from .simulation import simulate, synthetic_corpus
from .tokenize import MODES, Tokenizer

log = logging.getLogger("anchored_retrieval")


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_index(path: str):
    with open(path, "rb") as fh:
        head = fh.read(2)
    # npz archives are zip files
    return VectorIndex.load(path) if head == b"PK" else LexicalIndex.load(path)


def _retriever(args):
    index = _load_index(args.index)
    if isinstance(index, LexicalIndex):
        return LexicalRetriever(index, args.depth)
    if args.query_embeddings:
        encoder = FileEncoder(args.query_embeddings)
    elif args.service:
        encoder = ServiceEncoder(EmbeddingSource("service", url=args.service, model=args.model, token_env=args.token_env))
    else:
        raise SystemExit("dense index needs --query-embeddings or --service/--model")
    return DenseRetriever(index, encoder, args.depth)


def _agg_config(args) -> AggregationConfig:
    missing = {"rescore": "exact-rescore"}.get(args.missing, args.missing)
    return AggregationConfig(alpha=args.alpha, pooling=args.pooling, missing_score_policy=missing, output_depth=args.depth)


def _bundles(args):
    """Bundles from run files, plus rescorers when ``--missing rescore`` is requested."""
    base = read_run(args.base)
    hyp_slots = [read_run(p) for p in args.hyps]
    queries = {q.qid: q for q in load_queries(args.queries)} if args.queries else None
    counts = {qid: len(q.hypotheses) for qid, q in queries.items()} if queries is not None else None
    bundles, kept = bundles_from_slots(base, hyp_slots, counts)
    if args.missing != "rescore":
        return bundles, None
    if not (args.index and queries is not None):
        raise SystemExit("--missing rescore needs --index and --queries")
    retriever = _retriever(args)
    rescorers = {}
    for b in bundles:
        q = queries.get(b.qid)
        if q is None:
            raise SystemExit(f"query {b.qid!r} is in the base run but not in {args.queries}")
        slots = kept[b.qid]
        if slots and max(slots) > len(q.hypotheses):
            raise SystemExit(f"query {b.qid!r} has {len(q.hypotheses)} hypotheses but a run for slot {max(slots)}")
        # rescorer slots follow the bundle's hypothesis runs
        rescorers[b.qid] = retriever.rescorer(q.with_hypotheses([q.hypotheses[k - 1] for k in slots]))
    return bundles, rescorers


# subcommands


def cmd_index_lexical(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_lexical_index(corpus, Tokenizer(args.tokenizer), args.k1, args.b)
    index.save(args.out)
    log.info("indexed %d documents, %d terms -> %s", index.N, len(index.postings), args.out)
    return 0


def cmd_index_dense(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.embeddings:
        source = EmbeddingSource("file", path=args.embeddings)
    else:
        source = EmbeddingSource(
            "service", url=args.service, model=args.model, token_env=args.token_env, batch_size=args.batch_size
        )
    index = VectorIndex.build(source, corpus.doc_ids, [d.full_text for d in corpus])
    index.save(args.out)
    log.info("indexed %d vectors of dim %d -> %s", len(index.doc_ids), index.dim, args.out)
    return 0


def cmd_hypothesize(args) -> int:
    queries = load_queries(args.queries)
    if args.provider == "file":
        provider = PrecomputedProvider(args.k)
    elif args.provider == "oracle":
        provider = CorruptorProvider(args.k, args.level, seed=args.seed)
    else:
        if not (args.url and args.model):
            raise SystemExit("--provider llm needs --url and --model")
        settings = LLMSettings(
            url=args.url, model=args.model, template=args.template, token_env=args.token_env, temperature=args.temperature
        )
        provider = LLMProvider(settings, args.k)
    write_queries(attach_hypotheses(provider, queries, args.jobs), args.out)
    return 0


def cmd_retrieve(args) -> int:
    retriever = _retriever(args)
    queries = load_queries(args.queries)
    bundles = build_bundles(retriever, queries, args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, runs in enumerate(slot_runs(bundles)):
        name = "base" if k == 0 else f"hyp_{k}"
        write_run(runs, out / f"{name}.run", tag=f"{name}-s{args.seed}")
    return 0


def cmd_aggregate(args) -> int:
    cfg = _agg_config(args)
    bundles, rescorers = _bundles(args)
    rescorers = rescorers or {}
    runs = [aggregate_table(score_table(b, cfg.missing_score_policy, rescorers.get(b.qid)), b, cfg) for b in bundles]
    write_run(runs, args.out, tag=args.tag or cfg.tag)
    return 0


def cmd_eval(args) -> int:
    runs = read_run(args.run)
    qrels = load_qrels(args.qrels)
    row = evaluate_run(runs, qrels, args.cutoffs, args.rank_cutoff)
    if args.format == "json":
        _emit(json.dumps(row, indent=2) + "\n", args.out)
    else:
        _emit((rows_to_csv if args.format == "csv" else rows_to_text)([row]), args.out)
    return 0


def cmd_ttest(args) -> int:
    qrels = load_qrels(args.qrels)
    cmp = compare_runs(read_run(args.run_a), read_run(args.run_b), qrels, args.metric, args.cutoff)
    t = cmp.test
    row = {
        "metric": f"{args.metric}@{args.cutoff}",
        "n": t.n,
        "mean_a": cmp.base.mean,
        "mean_b": cmp.other.mean,
        "mean_diff": t.mean_diff,
        "t": t.t_stat,
        "p": t.p_value,
    }
    _emit(json.dumps(row, indent=2) + "\n", args.out)
    return 0


def _table_out(rows, args) -> None:
    _emit((rows_to_csv if args.format == "csv" else rows_to_text)(rows), args.out)


def cmd_sweep_alpha(args) -> int:
    bundles, rescorers = _bundles(args)
    grid = args.grid or alpha_grid()
    rows = sweep_alpha(bundles, _agg_config(args), load_qrels(args.qrels), grid, rescorers, args.cutoffs, args.rank_cutoff)
    _table_out(rows, args)
    return 0


def cmd_ablate_k(args) -> int:
    bundles, rescorers = _bundles(args)
    ks = args.ks if args.ks is not None else list(range(len(args.hyps) + 1))
    rows = ablate_k(bundles, ks, _agg_config(args), load_qrels(args.qrels), rescorers, args.cutoffs, args.rank_cutoff)
    _table_out(rows, args)
    return 0


def cmd_ablate_pooling(args) -> int:
    bundles, rescorers = _bundles(args)
    rows = ablate_pooling(bundles, _agg_config(args), load_qrels(args.qrels), rescorers, args.cutoffs, args.rank_cutoff)
    _table_out(rows, args)
    return 0


def cmd_simulate(args) -> int:
    if args.corpus:
        corpus, emitted = load_corpus(args.corpus), None
    else:
        corpus = synthetic_corpus(args.synthetic, seed=args.seed)
        emitted = corpus
    bundle = simulate(corpus, get_level(args.level), args.n, args.seed, args.min_chars, args.max_chars)
    write_simulation(bundle, args.out_dir, emitted)
    s = bundle.report["edit_sim"]
    log.info("%s: %d queries, mean EditSim %.4f (target %.3f)", args.level, args.n, s["mean"], bundle.level.target_editsim)
    return 0


def cmd_faithfulness_stats(args) -> int:
    report = faithfulness_report(load_queries(args.queries), load_corpus(args.corpus))
    if args.format == "json":
        _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit(report_to_csv(report), args.out)
    return 0


def cmd_pipeline(args) -> int:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(str(Path(args.output_dir).resolve()))}")
    if args.jobs is not None:
        overrides.append(f"jobs={args.jobs}")
    cfg = PipelineConfig.from_file(args.config, overrides)
    status, manifest = run_pipeline(cfg)
    failed = [s["name"] for s in manifest["stages"] if s["status"] == "failed"]
    if failed:
        log.error("pipeline failed at stage %s; see %s", failed[0], cfg.output_dir / "manifest.json")
    return status


# parser


def _add_run_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base", required=True, help="TREC run of the observed queries")
    p.add_argument("--hyps", nargs="*", default=[], help="TREC runs of hypothesis slots 1..K, in order")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--pooling", choices=POOLINGS, default="anchored-max")
    p.add_argument("--missing", choices=("zero", "rescore"), default="zero")
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--index", help="index file, needed by --missing rescore")
    p.add_argument("--queries", help="queries JSONL with hypotheses; restores empty hypothesis runs, needed by --missing rescore")
    p.add_argument("--query-embeddings", help="embedding TSV for queries and hypotheses (dense rescoring)")
    p.add_argument("--service", help="embedding service URL (dense rescoring)")
    p.add_argument("--model")
    p.add_argument("--token-env", default="EMBEDDING_API_KEY")


def _add_eval_opts(p: argparse.ArgumentParser, fmt_default: str = "text", formats=("text", "csv")) -> None:
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs", type=_ints, default=[1, 5, 10], help="recall cutoffs, e.g. 1,5,10")
    p.add_argument("--rank-cutoff", type=int, default=10, help="cutoff for MRR and nDCG")
    p.add_argument("--format", choices=formats, default=fmt_default)
    p.add_argument("--out", help="write here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchored-retrieval", description="Query-anchored aggregation of recovery hypotheses.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index-lexical", help="build a BM25 index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--tokenizer", choices=MODES, default="mixed")
    p.set_defaults(func=cmd_index_lexical)

    p = sub.add_parser("index-dense", help="build a flat inner-product index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--embeddings", help="embedding TSV with a dim=<d> header")
    src.add_argument("--service", help="embedding service URL")
    p.add_argument("--model")
    p.add_argument("--token-env", default="EMBEDDING_API_KEY")
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_index_dense)

    p = sub.add_parser("hypothesize", help="attach recovery hypotheses to queries")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=("file", "llm", "oracle"), default="file")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--level", choices=sorted(LEVELS), default="L3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--url", help="chat-completion endpoint")
    p.add_argument("--model")
    p.add_argument("--template", choices=TEMPLATES, default="generic")
    p.add_argument("--token-env", default="LLM_API_KEY")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_hypothesize)

    p = sub.add_parser("retrieve", help="write base and per-hypothesis runs")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="recorded in the run tags")
    p.add_argument("--query-embeddings")
    p.add_argument("--service")
    p.add_argument("--model")
    p.add_argument("--token-env", default="EMBEDDING_API_KEY")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("aggregate", help="fuse base and hypothesis runs")
    _add_run_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", help="run tag (default: derived from the config)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("eval", help="recall / MRR / nDCG of a run")
    p.add_argument("--run", required=True)
    _add_eval_opts(p, formats=("text", "csv", "json"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ttest", help="paired two-sided t-test between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", choices=("mrr", "ndcg"), default="mrr")
    p.add_argument("--cutoff", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("sweep-alpha", help="metrics over a grid of alpha values")
    _add_run_inputs(p)
    _add_eval_opts(p, "csv")
    p.add_argument("--grid", type=_floats, help="comma-separated alphas (default 0.1..0.9 and 0.91..0.99)")
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("ablate-k", help="metrics when only the first K hypotheses are used")
    _add_run_inputs(p)
    _add_eval_opts(p)
    p.add_argument("--ks", type=_ints, help="comma-separated K values (default 0..number of --hyps)")
    p.set_defaults(func=cmd_ablate_k)

    p = sub.add_parser("ablate-pooling", help="anchored aggregation against unanchored pooling")
    _add_run_inputs(p)
    _add_eval_opts(p)
    p.set_defaults(func=cmd_ablate_pooling)

    p = sub.add_parser("simulate", help="build a noisy-recall benchmark")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus JSONL to sample gold lines from")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate an N-document synthetic corpus")
    p.add_argument("--level", choices=sorted(LEVELS), default="L2")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-chars", type=int, default=8)
    p.add_argument("--max-chars", type=int, default=50)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("faithfulness-stats", help="query-to-gold similarity summary")
    p.add_argument("--queries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_faithfulness_stats)

    p = sub.add_parser("pipeline", help="run every stage from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (dotted), repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
