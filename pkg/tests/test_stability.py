import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from issuerel.classifiers import FitError
from issuerel.stability import (
    CATEGORIES, StabilityConfig, StabilityReport, category_counts, coefficient_correlation,
    compare_with_standard, cross_fold_consistency, l1_fitter, overlap_fractions, plot_spec,
    run_stability, selection_overlap, stability_select, summary_table,
)
from issuerel.synthetic import correlated_cluster_design, independent_informative_design


def fake_report(stability, h=None):
    stability = np.asarray(stability)
    h = stability.size
    from issuerel.stability import categorize
    return StabilityReport("logistic", 0.5, [f"f{j}" for j in range(h)], np.zeros((5, h)),
                           stability, categorize(stability), np.zeros(h), np.zeros(h),
                           [1.0] * 5, [None] * 5, [0] * 5)


def test_config_validation():
    for bad in ({"subsample_frac": 1.0}, {"thresholds": (0.0, 0.5)}, {"n_bootstrap": 0}):
        with pytest.raises(ValueError):
            StabilityConfig(**bad)


def test_label_feature_always_selected_and_zero_column_never():
    rng = np.random.default_rng(0)
    y = np.where(rng.random(80) < 0.5, 1.0, -1.0)
    X = np.column_stack([y + 0.1 * rng.standard_normal(80), np.zeros(80),
                         rng.standard_normal(80)])
    fit = l1_fitter("logistic")
    sel = stability_select(X, y, lambda A, b: fit(A, b, 1.0), StabilityConfig(n_bootstrap=50))
    assert sel.freq[0] == 1.0 and sel.freq[1] == 0.0
    assert sel.weights.shape == (50, 3)


def test_counting_definition():
    calls = []

    def fit(A, b):
        calls.append(1)
        return SimpleNamespace(weights=np.array([1.0 if len(calls) <= 40 else 0.0, 1e-11]))

    y = np.array([1.0, -1.0] * 10)
    sel = stability_select(np.zeros((20, 2)), y, fit, StabilityConfig())
    assert sel.freq[0] == 0.40 and sel.freq[1] == 0.0
    assert len(calls) == 100


def test_subsample_size_and_seeds():
    sizes, rows = [], []

    def fit(A, b):
        sizes.append(A.shape[0])
        rows.append(tuple(A[:, 0]))
        return SimpleNamespace(weights=np.zeros(1))

    X = np.arange(50, dtype=float)[:, None]
    y = np.array([1.0, -1.0] * 25)
    stability_select(X, y, fit, StabilityConfig(n_bootstrap=5), seed=7)
    assert sizes == [30] * 5 and len(set(rows)) == 5
    first = list(rows)
    rows.clear()
    stability_select(X, y, fit, StabilityConfig(n_bootstrap=5), seed=7)
    assert rows == first


def test_degenerate_subsample_is_redrawn_then_fails():
    y = np.array([1.0] * 3 + [-1.0] * 17)
    fit = lambda A, b: SimpleNamespace(weights=np.zeros(1))
    sel = stability_select(np.zeros((20, 1)), y, fit, StabilityConfig(n_bootstrap=30, subsample_frac=0.5))
    assert sel.resamples > 0
    with pytest.raises(FitError, match="lost a class"):
        stability_select(np.zeros((20, 1)), y, fit, StabilityConfig(n_bootstrap=30, subsample_frac=0.05))


def test_cross_fold_examples():
    s, c = cross_fold_consistency([[0.5]] * 5, 0.5)
    assert s.tolist() == [5] and c.tolist() == ["always"]
    s, c = cross_fold_consistency([[0.0]] * 5, 0.3)
    assert c.tolist() == ["never"]
    s, c = cross_fold_consistency([[0.7], [0.7], [0.7], [0.2], [0.2]], 0.4)
    assert s.tolist() == [3] and c.tolist() == ["moderately_stable"]
    with pytest.raises(ValueError):
        cross_fold_consistency([[0.1, 0.2], [0.1]], 0.5)


@given(st.lists(st.lists(st.integers(0, 100), min_size=5, max_size=5), min_size=1, max_size=30),
       st.sampled_from([0.3, 0.4, 0.5, 0.6]))
def test_categories_partition(columns, tau):
    freqs = np.array(columns, dtype=float).T / 100
    s, cats = cross_fold_consistency(freqs, tau)
    counts = category_counts(cats)
    assert sum(counts.values()) == freqs.shape[1]
    expected = {5: "always", 4: "highly_stable", 3: "moderately_stable", 2: "unstable",
                1: "unstable", 0: "never"}
    assert [expected[int(k)] for k in s] == cats.tolist()


def test_correlation_rules():
    b = np.array([0.5, -1.0, 2.0, 0.1])
    assert coefficient_correlation(b, b) == pytest.approx(1.0)
    assert coefficient_correlation(b[:2], b[:2]) is None
    assert coefficient_correlation(np.ones(4), b) is None


def test_overlap_examples():
    assert overlap_fractions({1, 2}, {1, 2}) == (1.0, 1.0)
    assert overlap_fractions({1}, {2}) == (0.0, 0.0)
    assert overlap_fractions(set(), {2}) is None
    A = {1, 2, 3, 4, 5}
    B = {1, 2, 3} | set(range(100, 255))
    a, b = overlap_fractions(A, B)
    assert len(B) == 158 and a == 0.6 and b == pytest.approx(3 / 158)
    ra, rb = fake_report([5, 3, 0, 4]), fake_report([3, 0, 3, 1])
    assert selection_overlap(ra, rb) == (1 / 3, 1 / 2)
    with pytest.raises(ValueError):
        selection_overlap(ra, fake_report([1, 2]))


@pytest.fixture(scope="module")
def small_run():
    X, y = independent_informative_design(n=200, h=8, seed=4)
    cfg = StabilityConfig(n_bootstrap=20)
    return X, y, run_stability(X, y, "logistic", cfg)


def test_run_is_deterministic(small_run):
    X, y, run = small_run
    again = run_stability(X, y, "logistic", StabilityConfig(n_bootstrap=20))
    assert np.array_equal(run.freqs, again.freqs)
    assert run.report(0.5).to_csv() == again.report(0.5).to_csv()


def test_report_shapes(small_run):
    X, y, run = small_run
    rep = run.report(0.4)
    assert rep.freqs.shape == (5, 8) and sum(rep.counts().values()) == 8
    assert np.allclose(rep.freqs * 20, np.round(rep.freqs * 20), rtol=0, atol=1e-9)
    rows = rep.feature_table()
    assert [abs(r["l1_beta"]) for r in rows] == sorted((abs(r["l1_beta"]) for r in rows), reverse=True)
    summary = rep.freq_summary()
    assert len(summary) == 5 and set(summary[0]) == {"all_mean", "all_std", "selected_mean", "selected_std"}
    table = summary_table([run.report(t) for t in (0.3, 0.6)])
    assert "Always (5/5 folds)" in table and "C range" in table
    spec = json.loads(json.dumps(plot_spec(rep)))
    assert spec["vconcat"][0]["mark"] == "bar"
    header = rep.to_csv().splitlines()[0].split(",")
    assert header[:6] == ["feature_id"] + [f"freq_fold{k}" for k in range(1, 6)]


def test_l1_coefficient_summary(small_run):
    _, _, run = small_run
    mean, sd = run.l1_coefficients()
    W = np.vstack([f.selection.weights for f in run.folds])
    for j in range(W.shape[1]):
        w = W[:, j][np.abs(W[:, j]) > 1e-10]
        if w.size > 1:
            assert mean[j] == pytest.approx(w.mean()) and sd[j] == pytest.approx(w.std(ddof=1))


def test_independent_features_correlate(small_run):
    X, y, run = small_run
    rep = compare_with_standard(run.report(0.5), X, y)
    assert rep.corr_l1_l2 is not None and rep.corr_l1_l2 > 0.5
    assert np.all((rep.l2_pvalues >= 0) & (rep.l2_pvalues <= 1))


def test_too_few_stable_features_gives_no_correlation():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((100, 5))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    run = run_stability(X, y, "svc", StabilityConfig(n_bootstrap=10))
    rep = compare_with_standard(run.report(0.9), X, y, strength=1.0)
    assert len(rep.selected()) < 3 and rep.corr_l1_l2 is None


def test_frequencies_are_percent_integral_by_default():
    X, y = independent_informative_design(n=120, h=4, seed=2)
    run = run_stability(X, y, "svc")
    assert np.allclose(run.freqs * 100, np.round(run.freqs * 100), rtol=0, atol=1e-9)


@pytest.mark.slow
def test_cluster_representatives():
    # checked on the default design seed; see the notes on this invariant
    X, y, cluster = correlated_cluster_design(seed=0)
    run = run_stability(X, y, "logistic")
    rep = compare_with_standard(run.report(0.5), X, y)
    reps = [int(np.sum(run.freqs[k, cluster == c] >= 0.6))
            for k in range(5) for c in range(cluster.max() + 1)]
    assert max(reps) <= 2
    aw = np.abs(rep.l2_coef)
    above = [int(np.sum(aw[cluster == c] > np.median(aw))) for c in range(5)]
    assert min(above) >= 5
