import csv
import json

import numpy as np
import pytest

from anchored_retrieval.cli import main
from anchored_retrieval.dense import write_embedding_file
from anchored_retrieval.io import load_corpus, load_qrels, load_queries, read_run, write_corpus, write_qrels, write_queries
from anchored_retrieval.pipeline import ConfigError, PipelineConfig, parse_override, run_pipeline
from anchored_retrieval.retrieve import hypothesis_id
from anchored_retrieval.types import Corpus, Document, QueryRecord, Qrels

TOY = Corpus(
    [
        Document("d1", "the quick brown fox"),
        Document("d2", "a lazy dog sleeps"),
        Document("d3", "quick thinking saves the day"),
        Document("d4", "brown bears eat honey"),
        Document("d5", "foxes and dogs"),
    ]
)


def _toy_inputs(tmp_path, hypotheses=False):
    write_corpus(TOY, tmp_path / "corpus.jsonl")
    qs = [
        QueryRecord("q1", "quick fox", ("brown fox",) if hypotheses else (), frozenset({"d1"})),
        QueryRecord("q2", "lazy dogs", ("dog sleeps", "dogs") if hypotheses else (), frozenset({"d2"})),
    ]
    write_queries(qs, tmp_path / "queries.jsonl")
    write_qrels(Qrels.from_gold(qs), tmp_path / "qrels.tsv")


def _config(tmp_path, body=""):
    p = tmp_path / "cfg.toml"
    p.write_text(
        'corpus = "corpus.jsonl"\nqueries = "queries.jsonl"\nqrels = "qrels.tsv"\noutput_dir = "out"\nseed = 5\n'
        '[retriever]\ntokenizer = "unicode-words"\n' + body
    )
    return p


def test_toy_pipeline_without_hypotheses_is_identity(tmp_path):
    _toy_inputs(tmp_path)
    status, manifest = run_pipeline(PipelineConfig.from_file(_config(tmp_path)))
    assert status == 0
    out = tmp_path / "out"
    assert read_run(out / "aggregated.run") == read_run(out / "base.run")
    assert not list(out.glob("hyp_*.run"))
    assert [s["name"] for s in manifest["stages"]] == ["load", "index", "hypothesize", "retrieve", "aggregate", "evaluate", "sweep"]
    assert all(s["status"] == "ok" for s in manifest["stages"])
    assert (out / "base.run").read_text().split("\n")[0].endswith("base-s5")
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 5 and report["base"] == report["aggregated"]


def test_pipeline_deterministic(tmp_path):
    _toy_inputs(tmp_path, hypotheses=True)
    cfg = _config(tmp_path, '[provider]\nkind = "precomputed"\nk = 2\n')
    _, m1 = run_pipeline(PipelineConfig.from_file(cfg, ["output_dir=\"a\""]))
    _, m2 = run_pipeline(PipelineConfig.from_file(cfg, ["output_dir=\"b\""]))
    assert m1["stages"] == m2["stages"]
    for name in ("base.run", "hyp_1.run", "hyp_2.run", "aggregated.run", "report.json", "report.csv", "alpha_sweep.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    listed = {f["path"]: f["sha256"] for s in m1["stages"] for f in s["files"]}
    import hashlib

    assert listed["aggregated.run"] == hashlib.sha256((tmp_path / "a" / "aggregated.run").read_bytes()).hexdigest()


def test_deleted_intermediate_is_regenerated(tmp_path):
    _toy_inputs(tmp_path, hypotheses=True)
    cfg = PipelineConfig.from_file(_config(tmp_path))
    run_pipeline(cfg)
    before = (tmp_path / "out" / "hyp_1.run").read_bytes()
    (tmp_path / "out" / "hyp_1.run").unlink()
    run_pipeline(cfg)
    assert (tmp_path / "out" / "hyp_1.run").read_bytes() == before


def test_missing_qrels_fails_before_work(tmp_path):
    _toy_inputs(tmp_path)
    (tmp_path / "qrels.tsv").unlink()
    with pytest.raises(ConfigError, match="qrels"):
        run_pipeline(PipelineConfig.from_file(_config(tmp_path)))
    assert not (tmp_path / "out").exists()


def test_stage_failure_marks_manifest(tmp_path, stub_service):
    _toy_inputs(tmp_path)
    svc = stub_service(lambda body, headers: (500, {}))
    cfg = _config(tmp_path, f'[provider]\nkind = "llm"\nurl = "{svc.url}"\nmodel = "m"\nk = 2\n')
    parsed = PipelineConfig.from_file(cfg)
    parsed.raw["provider"]["retries"] = 0
    status, manifest = run_pipeline(parsed)
    assert status != 0
    stages = {s["name"]: s for s in manifest["stages"]}
    assert stages["index"]["status"] == "ok" and stages["hypothesize"]["status"] == "failed"
    assert "ProviderError" in stages["hypothesize"]["error"]
    assert "retrieve" not in stages
    assert (tmp_path / "out" / "index.bm25.json").exists()
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["stages"][-1]["status"] == "failed"


def test_overrides_win():
    assert parse_override("aggregation.alpha=0.5") == (["aggregation", "alpha"], 0.5)
    assert parse_override("provider.kind=oracle") == (["provider", "kind"], "oracle")
    cfg = PipelineConfig.from_dict({"aggregation": {"alpha": 0.9}}, ".", ["aggregation.alpha=0.3", "seed=4"])
    assert cfg.aggregation_config().alpha == 0.3 and cfg.seed == 4
    assert cfg.raw["aggregation"]["pooling"] == "anchored-max"
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_config_validation(tmp_path):
    _toy_inputs(tmp_path)
    bad = [
        '[retriever]\nkind = "sparse"\n',
        '[provider]\nkind = "llm"\n',
        '[aggregation]\nalpha = 2.0\n',
    ]
    for body in bad:
        raw = {"corpus": "corpus.jsonl", "queries": "queries.jsonl", "qrels": "qrels.tsv"}
        import tomli

        raw.update(tomli.loads(body))
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(raw, tmp_path).validate()


def test_dense_pipeline_from_files(tmp_path):
    _toy_inputs(tmp_path, hypotheses=True)
    rng = np.random.default_rng(0)
    write_embedding_file(tmp_path / "docs.tsv", TOY.doc_ids, rng.normal(size=(5, 4)))
    ids = ["q1", hypothesis_id("q1", 1), "q2", hypothesis_id("q2", 1), hypothesis_id("q2", 2)]
    write_embedding_file(tmp_path / "queries.tsv", ids, rng.normal(size=(5, 4)))
    p = tmp_path / "cfg.toml"
    p.write_text(
        'corpus = "corpus.jsonl"\nqueries = "queries.jsonl"\nqrels = "qrels.tsv"\noutput_dir = "out"\n'
        '[retriever]\nkind = "dense"\ndoc_embeddings = "docs.tsv"\nquery_embeddings = "queries.tsv"\ndepth = 3\n'
    )
    status, manifest = run_pipeline(PipelineConfig.from_file(p))
    assert status == 0
    assert manifest["config"]["aggregation"].get("missing") is None
    assert "exact-rescore" in (tmp_path / "out" / "aggregated.run").read_text().split()[5]
    assert all(3 <= len(r) <= 5 for r in read_run(tmp_path / "out" / "aggregated.run"))
    assert all(len(r) == 3 for r in read_run(tmp_path / "out" / "base.run"))


# CLI


@pytest.fixture
def bench(tmp_path):
    assert main(["simulate", "--synthetic", "400", "--level", "L2", "--n", "30", "--seed", "2", "--out-dir", str(tmp_path / "b")]) == 0
    return tmp_path / "b"


def test_cli_simulate_outputs(bench):
    corpus = load_corpus(bench / "corpus.jsonl")
    qs = load_queries(bench / "queries.jsonl")
    assert len(corpus) == 400 and len(qs) == 30
    assert load_qrels(bench / "qrels.tsv").qids() == sorted(q.qid for q in qs)
    report = json.loads((bench / "faithfulness.json").read_text())
    assert report["seed"] == 2 and report["level"] == "L2"
    rows = list(csv.DictReader((bench / "faithfulness.csv").open()))
    assert rows[1]["metric"] == "edit_sim"


def test_cli_simulate_too_many(tmp_path, capsys):
    write_corpus(TOY, tmp_path / "c.jsonl")
    assert main(["simulate", "--corpus", str(tmp_path / "c.jsonl"), "--n", "9", "--out-dir", str(tmp_path / "o")]) == 2
    assert "eligible" in capsys.readouterr().err


def test_cli_end_to_end(bench, tmp_path, capsys):
    idx, hq, runs = tmp_path / "idx.json", tmp_path / "hq.jsonl", tmp_path / "runs"
    assert main(["index-lexical", "--corpus", str(bench / "corpus.jsonl"), "--out", str(idx), "--tokenizer", "cjk-char-bigrams"]) == 0
    assert main(["hypothesize", "--queries", str(bench / "queries.jsonl"), "--out", str(hq), "--provider", "oracle", "--k", "3", "--level", "L3", "--seed", "2"]) == 0
    assert all(len(q.hypotheses) == 3 for q in load_queries(hq))
    assert main(["retrieve", "--index", str(idx), "--queries", str(hq), "--out-dir", str(runs), "--seed", "2"]) == 0
    hyps = [str(runs / f"hyp_{k}.run") for k in (1, 2, 3)]
    qrels = str(bench / "qrels.tsv")
    common = ["--base", str(runs / "base.run"), "--hyps", *hyps]

    assert main(["aggregate", *common, "--alpha", "1.0", "--out", str(tmp_path / "a1.run")]) == 0
    assert read_run(tmp_path / "a1.run") == read_run(runs / "base.run")
    assert main(["aggregate", *common, "--alpha", "0.7", "--missing", "rescore", "--index", str(idx), "--queries", str(hq), "--out", str(tmp_path / "a7.run")]) == 0
    assert "anchored-max-a0.7-exact-rescore-d100" in (tmp_path / "a7.run").read_text()

    capsys.readouterr()
    assert main(["eval", "--run", str(tmp_path / "a7.run"), "--qrels", qrels, "--format", "json"]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["n_queries"] == 30 and 0 <= ev["mrr@10"] <= 1

    assert main(["ttest", "--run-a", str(runs / "base.run"), "--run-b", str(tmp_path / "a7.run"), "--qrels", qrels, "--metric", "ndcg"]) == 0
    tt = json.loads(capsys.readouterr().out)
    assert tt["metric"] == "ndcg@10" and 0 <= tt["p"] <= 1

    assert main(["sweep-alpha", *common, "--qrels", qrels, "--out", str(tmp_path / "sweep.csv")]) == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 19 and rows[-1]["d_mrr"] == "0"

    assert main(["ablate-k", *common, "--qrels", qrels, "--queries", str(hq), "--format", "csv"]) == 0
    ks = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["K"] for r in ks] == ["0", "1", "2", "3"]

    assert main(["ablate-pooling", *common, "--qrels", qrels]) == 0
    assert "unanchored-median" in capsys.readouterr().out

    assert main(["faithfulness-stats", "--queries", str(bench / "queries.jsonl"), "--corpus", str(bench / "corpus.jsonl"), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["n"]["count"] == 30


def test_cli_index_dense(tmp_path):
    write_corpus(TOY, tmp_path / "c.jsonl")
    write_embedding_file(tmp_path / "e.tsv", TOY.doc_ids, np.arange(1, 16, dtype=float).reshape(5, 3))
    assert main(["index-dense", "--corpus", str(tmp_path / "c.jsonl"), "--embeddings", str(tmp_path / "e.tsv"), "--out", str(tmp_path / "i.npz")]) == 0
    from anchored_retrieval.dense import VectorIndex

    assert VectorIndex.load(tmp_path / "i.npz").dim == 3


def test_cli_pipeline(tmp_path):
    _toy_inputs(tmp_path, hypotheses=True)
    cfg = _config(tmp_path)
    assert main(["pipeline", "--config", str(cfg), "--seed", "9", "--set", "aggregation.alpha=0.6", "--output-dir", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["config"]["aggregation"]["alpha"] == 0.6
    (tmp_path / "qrels.tsv").unlink()
    assert main(["pipeline", "--config", str(cfg)]) == 2
