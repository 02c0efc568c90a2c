"""Bootstrap stability selection inside cross-validation folds.

For every outer fold the L1 strength is tuned on the training part, then the
L1 model is refit on ``n_bootstrap`` random subsamples (without replacement)
and each feature's selection frequency is the fraction of fits giving it a
nonzero weight. A feature is stable in a fold when its frequency reaches the
threshold ``tau``; counting stable folds gives the always / highly /
moderately stable / unstable / never categories.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .classifiers import NONZERO_TOL, FitError, fit_linear_svc, fit_logistic, predict, wald_pvalues
from .evaluation import DEFAULT_GRID, FoldPlan, compute_metrics, cv_grid_search, make_folds

CATEGORIES = ("always", "highly_stable", "moderately_stable", "unstable", "never")
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class StabilityConfig:
    n_bootstrap: int = 100
    subsample_frac: float = 0.60
    thresholds: tuple = (0.3, 0.4, 0.5, 0.6)
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.subsample_frac < 1.0:
            raise ValueError("subsample_frac must lie in (0, 1)")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.n_bootstrap < 1:
            raise ValueError("n_bootstrap must be positive")


@dataclass
class Selection:
    """Outcome of stability selection on one training set."""

    counts: np.ndarray  # per feature, number of fits selecting it
    weights: np.ndarray  # (n_bootstrap, h) fitted weights
    n_bootstrap: int
    resamples: int = 0

    @property
    def freq(self) -> np.ndarray:
        return self.counts / self.n_bootstrap


def _subsample(y, size, seed):
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_ATTEMPTS):
        idx = np.sort(rng.choice(y.shape[0], size, replace=False))
        if np.any(y[idx] > 0) and np.any(y[idx] < 0):
            return idx, attempt
    raise FitError(f"subsample with seed {seed} lost a class {MAX_ATTEMPTS} times")


def stability_select(X, y, fit_fn: Callable, cfg: StabilityConfig = StabilityConfig(),
                     *, seed: Optional[int] = None, n_jobs: int = 1) -> Selection:
    """Refit ``fit_fn(X_sub, y_sub)`` on subsamples of ``floor(frac * n)`` rows.

    Iteration i draws its subsample from ``seed + i``; a draw missing a class
    is redrawn from the same generator, at most three times.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    seed = cfg.seed if seed is None else seed
    size = int(math.floor(cfg.subsample_frac * X.shape[0]))

    def one(i):
        idx, redraws = _subsample(y, size, seed + i)
        return np.asarray(fit_fn(X[idx], y[idx]).weights, dtype=float), redraws

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(one, range(cfg.n_bootstrap)))
    else:
        results = [one(i) for i in range(cfg.n_bootstrap)]
    W = np.vstack([w for w, _ in results])
    counts = np.sum(np.abs(W) > NONZERO_TOL, axis=0).astype(int)
    return Selection(counts, W, cfg.n_bootstrap, sum(r for _, r in results))


def categorize(stability, n_folds: int = 5) -> np.ndarray:
    stability = np.asarray(stability)
    cats = np.empty(stability.shape, dtype=object)
    cats[:] = "unstable"
    cats[stability == 0] = "never"
    cats[stability == n_folds - 2] = "moderately_stable"
    cats[stability == n_folds - 1] = "highly_stable"
    cats[stability == n_folds] = "always"
    return cats


def cross_fold_consistency(freqs, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Number of folds with ``freq >= tau`` per feature, and its category."""
    freqs = [np.asarray(f, dtype=float) for f in freqs]
    if len({f.shape for f in freqs}) != 1:
        raise ValueError("every fold must cover the same features")
    F = np.vstack(freqs)
    stability = np.sum(F >= tau, axis=0).astype(int)
    return stability, categorize(stability, F.shape[0])


def category_counts(categories) -> dict[str, int]:
    categories = np.asarray(categories)
    return {c: int(np.sum(categories == c)) for c in CATEGORIES}


def overlap_fractions(a: set, b: set) -> Optional[tuple[float, float]]:
    """(|A & B| / |A|, |A & B| / |B|), or None when either set is empty."""
    if not a or not b:
        return None
    both = len(set(a) & set(b))
    return both / len(a), both / len(b)


def coefficient_correlation(beta_l1, beta_l2, mask=None) -> Optional[float]:
    """Pearson correlation of |beta_l1| and |beta_l2| over ``mask``; None below 3 features."""
    a = np.abs(np.asarray(beta_l1, dtype=float))
    b = np.abs(np.asarray(beta_l2, dtype=float))
    if mask is not None:
        a, b = a[mask], b[mask]
    if a.size < 3 or np.std(a) == 0 or np.std(b) == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


# ---------------------------------------------------------------------------
# fold-level protocol


def l1_fitter(method: str, solver: str = "auto") -> Callable:
    """Return ``fit(X, y, C) -> model`` for the L1 variant of ``method``."""
    if method == "logistic":
        return lambda X, y, C: fit_logistic(X, y, "L1", C)[0]
    if method == "svc":
        return lambda X, y, C: fit_linear_svc(X, y, "L1", C, solver=solver)[0]
    raise ValueError(f"unknown method {method!r}")


@dataclass
class FoldStability:
    fold: int
    strength: float
    selection: Selection
    test_metrics: dict  # tau -> metrics of the refit on stable features
    n_stable: dict  # tau -> number of stable features


@dataclass
class StabilityRun:
    method: str
    cfg: StabilityConfig
    folds: list[FoldStability]
    feature_ids: list[str]

    @property
    def freqs(self) -> np.ndarray:
        return np.vstack([f.selection.freq for f in self.folds])

    def l1_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and SD of each weight over the bootstrap fits that selected it."""
        W = np.vstack([f.selection.weights for f in self.folds])
        sel = np.abs(W) > NONZERO_TOL
        cnt = sel.sum(axis=0)
        total = np.where(sel, W, 0.0).sum(axis=0)
        mean = np.divide(total, cnt, out=np.zeros(W.shape[1]), where=cnt > 0)
        dev = np.where(sel, (W - mean) ** 2, 0.0).sum(axis=0)
        sd = np.sqrt(np.divide(dev, cnt - 1, out=np.zeros(W.shape[1]), where=cnt > 1))
        return mean, sd

    def report(self, tau: float) -> "StabilityReport":
        stability, cats = cross_fold_consistency(self.freqs, tau)
        mean, sd = self.l1_coefficients()
        return StabilityReport(
            method=self.method, tau=tau, feature_ids=list(self.feature_ids), freqs=self.freqs,
            stability=stability, categories=cats, l1_mean=mean, l1_sd=sd,
            strengths=[f.strength for f in self.folds],
            fold_metrics=[f.test_metrics.get(tau) for f in self.folds],
            n_stable=[f.n_stable.get(tau, int(np.sum(f.selection.freq >= tau))) for f in self.folds],
        )


def _evaluate_stable(fit, X_tr, y_tr, X_te, y_te, freq, tau, strength):
    stable = np.flatnonzero(freq >= tau)
    if stable.size == 0:
        majority = 1 if np.sum(y_tr > 0) >= np.sum(y_tr < 0) else -1
        pred = np.full(y_te.shape[0], majority)
    else:
        model = fit(X_tr[:, stable], y_tr, strength)
        pred = predict(model, X_te[:, stable])
    return compute_metrics(y_te, pred), int(stable.size)


def run_stability(X, y, method: str = "logistic", cfg: StabilityConfig = StabilityConfig(),
                  plan: Optional[FoldPlan] = None, *, grid: Sequence = DEFAULT_GRID,
                  inner_folds: int = 5, feature_ids: Optional[Sequence[str]] = None,
                  solver: str = "auto", n_jobs: int = 1) -> StabilityRun:
    """Full protocol: outer folds, inner-CV tuning of C, bootstrap selection, test scoring.

    Test-fold scores refit the same L1 model on the training fold restricted
    to the features stable at each threshold in ``cfg.thresholds``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    plan = plan or make_folds(y, 5, cfg.seed)
    fit = l1_fitter(method, solver)
    folds = []
    for k, tr, te in plan.splits():
        C_k, _ = cv_grid_search(fit, grid, X[tr], y[tr], inner_folds, cfg.seed + k)
        sel = stability_select(X[tr], y[tr], lambda A, b: fit(A, b, C_k), cfg, n_jobs=n_jobs)
        metrics, n_stable = {}, {}
        for tau in cfg.thresholds:
            metrics[tau], n_stable[tau] = _evaluate_stable(fit, X[tr], y[tr], X[te], y[te],
                                                           sel.freq, tau, C_k)
        folds.append(FoldStability(k, C_k, sel, metrics, n_stable))
    ids = list(feature_ids) if feature_ids is not None else [f"f{j}" for j in range(X.shape[1])]
    return StabilityRun(method, cfg, folds, ids)


# ---------------------------------------------------------------------------
# reports


@dataclass
class StabilityReport:
    method: str
    tau: float
    feature_ids: list[str]
    freqs: np.ndarray  # (n_folds, h)
    stability: np.ndarray
    categories: np.ndarray
    l1_mean: np.ndarray
    l1_sd: np.ndarray
    strengths: list[float]
    fold_metrics: list[Optional[dict]]
    n_stable: list[int]
    l2_coef: Optional[np.ndarray] = None
    l2_pvalues: Optional[np.ndarray] = None
    l2_strength: Optional[float] = None
    corr_l1_l2: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def h(self) -> int:
        return self.freqs.shape[1]

    def counts(self) -> dict[str, int]:
        return category_counts(self.categories)

    def selected(self, min_stability: int = 3) -> set[int]:
        return set(np.flatnonzero(self.stability >= min_stability).tolist())

    def freq_summary(self) -> list[dict]:
        """Per-fold mean +- std of frequencies, over all features and over features with freq > 0."""
        out = []
        for row in self.freqs:
            pos = row[row > 0]
            out.append({
                "all_mean": float(row.mean()), "all_std": float(row.std()),
                "selected_mean": float(pos.mean()) if pos.size else 0.0,
                "selected_std": float(pos.std()) if pos.size else 0.0,
            })
        return out

    def feature_table(self, min_stability: int = 0) -> list[dict]:
        """Rows for features at or above ``min_stability``, sorted by |L1 beta| descending."""
        idx = [j for j in range(self.h) if self.stability[j] >= min_stability]
        idx.sort(key=lambda j: (-abs(self.l1_mean[j]), j))
        rows = []
        for j in idx:
            rows.append({
                "feature_id": self.feature_ids[j], "stability": int(self.stability[j]),
                "category": str(self.categories[j]), "l1_beta": float(self.l1_mean[j]),
                "l1_sd": float(self.l1_sd[j]),
                "l2_beta": None if self.l2_coef is None else float(self.l2_coef[j]),
                "p_value": None if self.l2_pvalues is None else float(self.l2_pvalues[j]),
            })
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n_folds = self.freqs.shape[0]
        writer.writerow(["feature_id"] + [f"freq_fold{k + 1}" for k in range(n_folds)]
                        + ["stability", "category", "l1_beta", "l1_sd", "l2_beta", "p_value"])
        for j in range(self.h):
            writer.writerow(
                [self.feature_ids[j]] + [f"{v:.2f}" for v in self.freqs[:, j]]
                + [int(self.stability[j]), self.categories[j], f"{self.l1_mean[j]:.6f}",
                   f"{self.l1_sd[j]:.6f}",
                   "" if self.l2_coef is None else f"{self.l2_coef[j]:.6f}",
                   "" if self.l2_pvalues is None else f"{self.l2_pvalues[j]:.6g}"])
        return buf.getvalue()


def compare_with_standard(report: StabilityReport, X, y, *, strength: Optional[float] = None,
                          grid: Sequence = DEFAULT_GRID, seed: int = 42,
                          min_stability: int = 3) -> StabilityReport:
    """Attach full-data L2-logistic weights, Wald p-values and the |beta| correlation.

    ``strength`` defaults to the C chosen by 5-fold CV on the full data.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    fit = lambda A, b, C: fit_logistic(A, b, "L2", C)[0]
    if strength is None:
        strength, _ = cv_grid_search(fit, grid, X, y, 5, seed)
    model, diag = fit_logistic(X, y, "L2", strength)
    report.l2_coef = model.weights.copy()
    report.l2_pvalues = wald_pvalues(model, X, y)
    report.l2_strength = strength
    report.extra["l2_converged"] = diag.converged
    report.corr_l1_l2 = coefficient_correlation(report.l1_mean, report.l2_coef,
                                                report.stability >= min_stability)
    return report


def selection_overlap(report_a: StabilityReport, report_b: StabilityReport,
                      min_stability: int = 3) -> Optional[tuple[float, float]]:
    if report_a.h != report_b.h:
        raise ValueError("reports cover different feature spaces")
    return overlap_fractions(report_a.selected(min_stability), report_b.selected(min_stability))


def _pm(values) -> str:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return "n/a"
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return f"{v.mean():.3f}±{sd:.3f}"


def summary_table(reports: Sequence[StabilityReport]) -> str:
    """Selection statistics per threshold, one column per report."""
    cols = [f"{r.tau:g}" for r in reports]
    h = reports[0].h
    lines = [f"{'Metric':<28}" + "".join(f"{c:>18}" for c in cols)]

    def row(name, cells):
        lines.append(f"{name:<28}" + "".join(f"{c:>18}" for c in cells))

    labels = {"always": "Always (5/5 folds)", "highly_stable": "Highly stable (4/5)",
              "moderately_stable": "Moderately stable (3/5)", "unstable": "Unstable (1-2/5)",
              "never": "Never selected"}
    for cat in CATEGORIES:
        row(labels[cat], [f"{r.counts()[cat]} ({100 * r.counts()[cat] / h:.2f}%)" for r in reports])
    row("Mean F1", [_pm(m["macro_f1"] if m else None for m in r.fold_metrics) for r in reports])
    row("Mean Accuracy", [_pm(m["accuracy"] if m else None for m in r.fold_metrics) for r in reports])
    row("Mean # features", [f"{np.mean(r.n_stable):.1f}" for r in reports])
    row("Std # features", [f"{np.std(r.n_stable, ddof=1):.1f}" for r in reports])
    row("Min features", [f"{min(r.n_stable)}" for r in reports])
    row("Max features", [f"{max(r.n_stable)}" for r in reports])
    row("Range (max/min)", [f"{max(r.n_stable) / min(r.n_stable):.1f}x" if min(r.n_stable) else "inf"
                            for r in reports])
    row("C range", [f"{min(r.strengths):.2f}-{max(r.strengths):.2f}" for r in reports])
    row("C ratio (max/min)", [f"{max(r.strengths) / min(r.strengths):.0f}x" for r in reports])
    row("L1-L2 coefficient corr.", ["n/a" if r.corr_l1_l2 is None else f"{r.corr_l1_l2:.3f}"
                                    for r in reports])
    return "\n".join(lines)


def plot_spec(report: StabilityReport) -> dict:
    """Vega-lite spec: per-fold frequency heatmap of ever-selected features plus category bars."""
    cells = [{"feature": report.feature_ids[j], "fold": k + 1, "freq": float(report.freqs[k, j])}
             for j in range(report.h) if report.stability[j] > 0
             for k in range(report.freqs.shape[0])]
    counts = [{"category": c, "count": n} for c, n in report.counts().items()]
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "title": f"Stability overview ({report.method}, threshold {report.tau:g})",
        "vconcat": [
            {"data": {"values": counts}, "mark": "bar",
             "encoding": {"x": {"field": "category", "type": "nominal", "sort": list(CATEGORIES)},
                          "y": {"field": "count", "type": "quantitative"}}},
            {"data": {"values": cells}, "mark": "rect",
             "encoding": {"x": {"field": "feature", "type": "nominal", "sort": None},
                          "y": {"field": "fold", "type": "ordinal"},
                          "color": {"field": "freq", "type": "quantitative",
                                    "scale": {"domain": [0, 1]}}}},
        ],
    }


def write_plot_spec(report: StabilityReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(plot_spec(report), fh, indent=1)
