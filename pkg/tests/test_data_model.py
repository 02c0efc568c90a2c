import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from issuerel.data_model import (
    IRRELEVANT, RELEVANT, Case, CorpusError, IssueCandidate, Question, QuestionPool,
    ScoreMatrix, binarize_scores, ingest_corpus, labeled_design, write_corpus,
)


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def _case(cid="c1", facts=("a fact", "another fact")):
    return {"kind": "case", "case_id": cid, "facts": list(facts), "silver_issues": [], "source": ""}


def _issue(iid, cid="c1", label="Relevant"):
    rec = {"kind": "issue", "issue_id": iid, "case_id": cid, "text": f"Whether {iid}", "origin": "extracted"}
    if label:
        rec["label"] = label
    return rec


def test_minimal_corpus(tmp_path):
    p = _write(tmp_path / "c.jsonl", [_case(), _issue("i1")])
    cases, issues = ingest_corpus(p)
    assert len(cases) == 1 and cases[0].m == 2
    assert issues[0].label == RELEVANT


def test_dangling_reference(tmp_path):
    p = _write(tmp_path / "c.jsonl", [_case(), _issue("i1", cid="nope")])
    with pytest.raises(CorpusError, match="unknown case_id"):
        ingest_corpus(p)


def test_duplicate_issue_id_is_named(tmp_path):
    recs = [_case(f"c{k}") for k in range(3)]
    recs += [_issue(f"i{j}", cid=f"c{j % 3}") for j in range(8)] + [_issue("i4", cid="c0")]
    p = _write(tmp_path / "c.jsonl", recs)
    with pytest.raises(CorpusError, match="'i4'"):
        ingest_corpus(p)


def test_parse_error_has_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps(_case()) + "\n{not json\n")
    with pytest.raises(CorpusError, match=":2:"):
        ingest_corpus(p)


def test_empty_fact_list(tmp_path):
    p = _write(tmp_path / "c.jsonl", [_case(facts=())])
    with pytest.raises(CorpusError, match="empty fact list"):
        ingest_corpus(p)


def test_depth_bounds():
    with pytest.raises(CorpusError):
        IssueCandidate("i", "c", "text", "incremental", depth=0)
    case = Case("c", ("x",))
    from issuerel.data_model import validate_corpus
    with pytest.raises(CorpusError, match="exceeds"):
        validate_corpus([case], [IssueCandidate("i", "c", "text", "incremental", depth=2)])


def test_corpus_round_trip(tmp_path):
    cases = [Case("c1", ("f one", "f two"), ("Whether x",), "src"), Case("c2", ("g",))]
    issues = [IssueCandidate("i1", "c1", "Whether a", "incremental", 2, RELEVANT),
              IssueCandidate("i2", "c2", "Whether b", "baseline", None, IRRELEVANT),
              IssueCandidate("i3", "c2", "Whether c")]
    write_corpus(tmp_path / "a.jsonl", cases, issues)
    again = ingest_corpus(tmp_path / "a.jsonl")
    assert again == (cases, issues)
    write_corpus(tmp_path / "b.jsonl", *again)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_binarize_examples():
    assert binarize_scores(np.array([[0.9, 0.4]]), 0.5).tolist() == [[1, 0]]
    assert binarize_scores(np.full((2, 3), 0.3), 0.3).tolist() == [[1] * 3] * 2
    assert binarize_scores(np.empty((0, 4)), 0.5).shape == (0, 4)
    with pytest.raises(ValueError):
        binarize_scores(np.zeros((1, 1)), 1.0)


@given(st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=6))
def test_binarize_identity_on_binary(rows):
    B = np.array(rows, dtype=float)
    assert np.array_equal(binarize_scores(B, 0.5), B)


def test_pool_dedup_on_normalized_text():
    pool = QuestionPool.from_questions([Question("q1", "Is it  late?"), Question("q2", "Is it late? "),
                                        Question("q3", "Is it early?")])
    assert [q.question_id for q in pool] == ["q1", "q3"]
    with pytest.raises(CorpusError):
        QuestionPool((Question("q1", "a?"), Question("q1", "b?")))


texts = st.lists(st.text("abcdefgh ?", min_size=1).filter(str.strip), min_size=1, max_size=6, unique=True)


@given(texts, st.data())
def test_pool_digest_tracks_text_and_order(qs, data):
    pool = QuestionPool(tuple(Question(f"q{i}", t) for i, t in enumerate(qs)))
    relabeled = QuestionPool(tuple(Question(f"x{i}", t) for i, t in enumerate(qs)))
    assert pool.digest == relabeled.digest
    perm = data.draw(st.permutations(qs))
    shuffled = QuestionPool(tuple(Question(f"q{i}", t) for i, t in enumerate(perm)))
    norm = [" ".join(t.split()) for t in qs]
    if [" ".join(t.split()) for t in perm] != norm:
        assert shuffled.digest != pool.digest


def test_score_matrix_range_and_csv(tmp_path):
    with pytest.raises(CorpusError):
        ScoreMatrix((("c", "i"),), ("q1",), "h", np.array([[1.0]]))
    m = ScoreMatrix((("c", "i"), ("c", "j")), ("q1", "q2"), "abc", np.array([[0.1, 0.9], [0.5, 0.25]]))
    m.write_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "case_id,issue_id,q_q1,q_q2"
    back = ScoreMatrix.read_csv(tmp_path / "m.csv")
    assert back.row_ids == m.row_ids and back.pool_hash == "abc"
    assert np.array_equal(back.values, m.values)


def test_check_pool_mismatch():
    pool = QuestionPool((Question("q1", "a?"),))
    m = ScoreMatrix((), ("q1",), "other", np.empty((0, 1)))
    with pytest.raises(CorpusError, match="pool"):
        m.check_pool(pool)


def test_labeled_design_skips_unlabeled():
    m = ScoreMatrix((("c", "i1"), ("c", "i2")), ("q",), "h", np.array([[0.2], [0.7]]))
    issues = [IssueCandidate("i1", "c", "t"), IssueCandidate("i2", "c", "t", label=IRRELEVANT)]
    X, y, rows = labeled_design(m, issues)
    assert X.tolist() == [[0.7]] and y.tolist() == [-1.0] and rows == [("c", "i2")]
