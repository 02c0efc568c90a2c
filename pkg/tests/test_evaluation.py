from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from issuerel.evaluation import (
    DEFAULT_GRID, METRICS, FoldResult, MetricReport, ModelSpec, compute_metrics, format_table,
    grid_search, make_folds, reports_to_csv, run_experiment, split_train_val,
)
from issuerel.classifiers import FitError
from issuerel.synthetic import separable_design


def confusion_labels(tp, fp, fn, tn):
    y_true = [1] * tp + [-1] * fp + [1] * fn + [-1] * tn
    y_pred = [1] * tp + [1] * fp + [-1] * fn + [-1] * tn
    return np.array(y_true), np.array(y_pred)


def test_confusion_example_exact():
    m = compute_metrics(*confusion_labels(3, 1, 2, 4))
    f1_pos = Fraction(2) * Fraction(3, 4) * Fraction(3, 5) / (Fraction(3, 4) + Fraction(3, 5))
    f1_neg = Fraction(2) * Fraction(4, 6) * Fraction(4, 5) / (Fraction(4, 6) + Fraction(4, 5))
    assert abs(m["accuracy"] - 0.7) < 1e-12
    assert abs(m["macro_f1"] - float((f1_pos + f1_neg) / 2)) < 1e-12
    assert abs(m["macro_f1"] - 23 / 33) < 1e-12
    assert abs(m["macro_precision"] - 17 / 24) < 1e-12
    assert abs(m["macro_recall"] - 0.7) < 1e-12


def test_all_positive_prediction():
    y = np.array([1, 1, -1, -1])
    m = compute_metrics(y, np.ones(4, dtype=int))
    assert abs(m["macro_f1"] - 1 / 3) < 1e-12 and m["accuracy"] == 0.5


def test_perfect_and_errors():
    y = np.array([1, -1, 1])
    assert all(v == 1.0 for v in compute_metrics(y, y).values())
    with pytest.raises(ValueError):
        compute_metrics(y, y[:2])


@given(st.lists(st.sampled_from([1, -1]), min_size=1, max_size=40), st.data())
def test_metric_symmetry_and_range(y_true, data):
    y_true = np.array(y_true)
    y_pred = np.array(data.draw(st.lists(st.sampled_from([1, -1]), min_size=len(y_true),
                                         max_size=len(y_true))))
    a = compute_metrics(y_true, y_pred)
    b = compute_metrics(-y_true, -y_pred)
    for k in METRICS:
        assert 0.0 <= a[k] <= 1.0
        assert abs(a[k] - b[k]) < 1e-12


def test_folds_small_exact():
    y = np.array([1] * 5 + [-1] * 5)
    plan = make_folds(y, 5, 42)
    for k in range(5):
        idx = plan.test_indices(k)
        assert sorted(y[idx].tolist()) == [-1, 1]
    assert np.array_equal(plan.assignments, make_folds(y, 5, 42).assignments)


def test_folds_large_uneven_counts():
    y = np.array([1] * 607 + [-1] * 368)
    plan = make_folds(y, 5, 42)
    pos = [int(np.sum(y[plan.test_indices(k)] > 0)) for k in range(5)]
    assert set(pos) <= {121, 122} and sum(pos) == 607


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 60), st.integers(5, 60), st.integers(2, 5), st.integers(0, 99))
def test_folds_stratified(npos, nneg, k, seed):
    y = np.array([1] * npos + [-1] * nneg)
    plan = make_folds(y, k, seed)
    assert sorted(np.concatenate([plan.test_indices(j) for j in range(k)]).tolist()) == list(range(y.size))
    for j in range(k):
        p = int(np.sum(y[plan.test_indices(j)] > 0))
        assert abs(p - npos / k) <= 1


def test_folds_too_small():
    with pytest.raises(ValueError):
        make_folds(np.array([1, 1, -1, -1, -1, -1]), 3)


def test_split_train_val_examples():
    y = np.array([1] * 5 + [-1] * 5)
    tr, va = split_train_val(np.arange(10), y, seed=1)
    assert tr.size == 7 and va.size == 3
    assert set(tr) | set(va) == set(range(10)) and not set(tr) & set(va)
    assert {1, -1} <= set(y[va])
    tr2, va2 = split_train_val(np.arange(10), y, seed=2)
    assert tr2.size == 7 and (not np.array_equal(tr, tr2))
    with pytest.raises(ValueError):
        split_train_val(np.arange(4), np.array([1, -1, -1, -1]))


def test_grid_search_rules():
    X = np.array([[0.0], [1.0], [0.1], [0.9]])
    y = np.array([-1.0, 1.0, -1.0, 1.0])
    spec = ModelSpec("logistic", "L2")
    fit = lambda A, b, s: spec.fit(A, b, s)
    best, _ = grid_search(fit, [3.0], X, y, X, y)
    assert best == 3.0
    best, scores = grid_search(fit, [100.0, 50.0], X, y, X, y)
    assert scores[50.0] == scores[100.0] and best == 50.0
    with pytest.raises(ValueError):
        grid_search(fit, [], X, y, X, y)

    def broken(A, b, s):
        raise FitError("nope")
    with pytest.raises(FitError):
        grid_search(broken, [1.0], X, y, X, y)


def test_default_grid():
    assert len(DEFAULT_GRID) == 10
    assert np.isclose(DEFAULT_GRID[0], 1e-2) and np.isclose(DEFAULT_GRID[-1], 1e2)
    assert np.allclose(np.diff(np.log10(DEFAULT_GRID)), 4 / 9)


FAMILIES = [ModelSpec("logistic", "L1"), ModelSpec("logistic", "L2"), ModelSpec("svc", "L1"),
            ModelSpec("svc", "L2"), ModelSpec("ridge"), ModelSpec("lda"),
            ModelSpec("knn", grid=(1, 3, 5))]


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.name)
def test_separable_data_is_perfect(spec):
    X, y = separable_design(120, 4, seed=3)
    rep = run_experiment(X, y, spec, make_folds(y, 5, 42))
    assert rep.mean["macro_f1"] == 1.0 and rep.std["macro_f1"] == 0.0


def test_shuffled_labels_near_chance():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 5))
    y = rng.permutation(np.array([1.0] * 100 + [-1.0] * 100))
    rep = run_experiment(X, y, ModelSpec("logistic", "L2"), make_folds(y, 5, 42))
    assert 0.35 <= rep.mean["accuracy"] <= 0.65


def test_no_leakage_and_aggregation():
    X, y = separable_design(100, 3, seed=1)
    plan = make_folds(y, 5, 42)
    rep = run_experiment(X, y, ModelSpec("svc", "L1"), plan, n_jobs=2)
    for f in rep.folds:
        test = set(f.test_idx.tolist())
        assert not test & set(f.train_idx.tolist()) and not test & set(f.val_idx.tolist())
    for m in METRICS:
        vals = [f.metrics[m] for f in rep.folds]
        assert abs(rep.mean[m] - np.mean(vals)) < 1e-12
        assert abs(rep.std[m] - np.std(vals, ddof=1)) < 1e-12
    again = run_experiment(X, y, ModelSpec("svc", "L1"), plan)
    assert reports_to_csv([rep]) == reports_to_csv([again])


def test_report_formats_failed_folds():
    rep = MetricReport("LDA", [FoldResult(0, None, error="boom"), FoldResult(1, None, error="boom")])
    assert "n/a" in format_table([rep])
    csv_text = reports_to_csv([rep])
    assert "every fold failed" in csv_text and "boom" in csv_text
