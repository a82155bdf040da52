import math
import random

import pytest

import oracles
from anchored_retrieval.lexical import LexicalIndex, build_lexical_index, score_lexical
from anchored_retrieval.tokenize import Tokenizer, is_cjk
from anchored_retrieval.types import Corpus, Document

WORDS = Tokenizer("unicode-words")


@pytest.fixture
def ab_bc():
    return Corpus([Document("d1", "a b"), Document("d2", "b c")])


def test_tokenizer_modes():
    assert Tokenizer("cjk-char-bigrams")("你好吗") == ["你好", "好吗"]
    assert Tokenizer("unicode-words")("你好吗 Hello") == ["你好吗", "hello"]
    assert Tokenizer("mixed")("abc你好吗x") == ["abc", "你好", "好吗", "x"]
    assert Tokenizer("mixed")("我") == ["我"]
    assert Tokenizer("cjk-char-bigrams", lowercase=False)("AB") == ["AB"]
    assert is_cjk("好") and not is_cjk("a")
    with pytest.raises(ValueError):
        Tokenizer("spaces")


def test_counts(ab_bc):
    idx = build_lexical_index(ab_bc, WORDS)
    assert idx.N == 2
    assert idx.df("b") == 2 and idx.df("a") == 1 and idx.df("zzz") == 0
    assert idx.avg_doc_len == 2.0


def test_ln2_example(ab_bc):
    run = score_lexical(build_lexical_index(ab_bc, WORDS, k1=1.2, b=0.75), "a")
    assert run.doc_ids == ["d1"]
    assert run.entries[0][1] == pytest.approx(math.log(2), abs=1e-12)


def test_tie_broken_by_doc_id(ab_bc):
    run = score_lexical(build_lexical_index(ab_bc, WORDS), "b")
    (d1, s1), (d2, s2) = run.entries
    assert (d1, d2) == ("d1", "d2")
    assert s1 == s2
    ref = oracles.bm25({"d1": ["a", "b"], "d2": ["b", "c"]}, ["b"])
    assert s1 == pytest.approx(ref["d1"], abs=1e-12)


def test_no_matching_term(ab_bc):
    assert len(score_lexical(build_lexical_index(ab_bc, WORDS), "zzz")) == 0


def test_candidates_include_zero_scores(ab_bc):
    run = score_lexical(build_lexical_index(ab_bc, WORDS), "a", candidates=["d2", "d1"])
    assert run.scores() == {"d1": pytest.approx(math.log(2)), "d2": 0.0}
    with pytest.raises(KeyError):
        score_lexical(build_lexical_index(ab_bc, WORDS), "a", candidates=["nope"])


def test_parameter_validation(ab_bc):
    with pytest.raises(ValueError):
        build_lexical_index(ab_bc, WORDS, k1=0)
    with pytest.raises(ValueError):
        build_lexical_index(ab_bc, WORDS, b=1.5)


def test_all_empty_documents_warn(caplog):
    corpus = Corpus([Document("d1", "!!"), Document("d2", "??")])
    idx = build_lexical_index(corpus, WORDS)
    assert "tokenized to nothing" in caplog.text
    assert len(score_lexical(idx, "a")) == 0


def _random_corpus(rng, n_docs, vocab="abcdefgh"):
    return Corpus([Document(f"d{i:02d}", " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 8)))) for i in range(n_docs)])


def test_matches_formula_oracle():
    rng = random.Random(7)
    for _ in range(100):
        corpus = _random_corpus(rng, rng.randint(1, 12))
        k1, b = rng.uniform(0.5, 2.0), rng.uniform(0, 1)
        idx = build_lexical_index(corpus, WORDS, k1, b)
        query = [rng.choice("abcdefghxy") for _ in range(rng.randint(1, 4))]
        ref = oracles.bm25({d.doc_id: d.text.split() for d in corpus}, query, k1, b)
        got = score_lexical(idx, " ".join(query)).scores()
        assert set(got) == {d for d, s in ref.items() if s > 0}
        for d, s in got.items():
            assert s == pytest.approx(ref[d], rel=1e-12, abs=1e-12)


def test_full_candidates_equal_open_search():
    rng = random.Random(11)
    for _ in range(50):
        corpus = _random_corpus(rng, rng.randint(1, 10))
        idx = build_lexical_index(corpus, WORDS)
        q = " ".join(rng.choice("abcxyz") for _ in range(3))
        open_run = score_lexical(idx, q).scores()
        full = score_lexical(idx, q, candidates=corpus.doc_ids).scores()
        assert {d: s for d, s in full.items() if s > 0} == open_run
        assert all(s == 0.0 for d, s in full.items() if d not in open_run)


def test_unrelated_document_keeps_single_term_order():
    # one query term: every score scales by the same idf factor
    rng = random.Random(3)
    for _ in range(100):
        corpus = _random_corpus(rng, rng.randint(2, 10), vocab="abcd")
        q = rng.choice("abcd")
        before = score_lexical(build_lexical_index(corpus, WORDS, b=0.0), q)
        bigger = Corpus(list(corpus) + [Document("zz", "x y z")])
        after = score_lexical(build_lexical_index(bigger, WORDS, b=0.0), q)
        assert after.doc_ids == before.doc_ids


def test_unrelated_document_can_reorder_multi_term_queries():
    # idf of rare and common terms moves by different amounts when N grows
    docs = [Document("d0", "a"), Document("d1", "a"), Document("d2", "b a"), Document("d3", "b b b")]
    before = score_lexical(build_lexical_index(Corpus(docs), WORDS, b=0.0), "a b").doc_ids
    after = score_lexical(build_lexical_index(Corpus(docs + [Document("z", "x")]), WORDS, b=0.0), "a b").doc_ids
    assert before[:2] == ["d3", "d2"] and after[:2] == ["d2", "d3"]


def test_deterministic_and_depth(ab_bc):
    idx = build_lexical_index(ab_bc, WORDS)
    assert score_lexical(idx, "b a", qid="q") == score_lexical(idx, "b a", qid="q")
    assert score_lexical(idx, "b", depth=1).doc_ids == ["d1"]


def test_save_load(tmp_path):
    corpus = Corpus([Document("d1", "你好吗 world"), Document("d2", "好吗")])
    idx = build_lexical_index(corpus, Tokenizer("mixed"), k1=0.9, b=0.4)
    idx.save(tmp_path / "i.json")
    back = LexicalIndex.load(tmp_path / "i.json")
    assert back.tokenizer == idx.tokenizer and back.k1 == 0.9 and back.b == 0.4
    for q in ("你好", "好吗 world", "nothing"):
        assert score_lexical(back, q) == score_lexical(idx, q)


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"magic": "other"}')
    with pytest.raises(ValueError, match="not a BM25 index"):
        LexicalIndex.load(p)
