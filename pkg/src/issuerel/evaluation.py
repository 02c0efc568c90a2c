"""Stratified cross-validation, grid search and macro classification metrics."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .classifiers import (FitError, fit_knn, fit_lda, fit_linear_svc, fit_logistic,
                          fit_ridge, predict)

DEFAULT_GRID = tuple(float(c) for c in np.logspace(-2, 2, 10))
METRICS = ("macro_f1", "accuracy", "macro_precision", "macro_recall")


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    seed: int = 42
    inner_split: tuple[int, int] = (70, 30)

    def test_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def train_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)

    def splits(self):
        for k in range(self.n_folds):
            yield k, self.train_indices(k), self.test_indices(k)


def make_folds(labels, n_folds: int = 5, seed: int = 42) -> FoldPlan:
    """Stratified fold assignment.

    Each class is shuffled and dealt round-robin; the second class starts
    where the first stopped so fold sizes also stay within one of each other.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    rng = np.random.default_rng(seed)
    assignments = np.full(labels.shape[0], -1, dtype=int)
    offset = 0
    for cls in (1, -1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise ValueError(f"class {cls:+d} has {idx.size} members, fewer than {n_folds} folds")
        idx = rng.permutation(idx)
        assignments[idx] = (offset + np.arange(idx.size)) % n_folds
        offset = (offset + idx.size) % n_folds
    if np.any(assignments < 0):
        raise ValueError("labels must be +1 / -1")
    return FoldPlan(n_folds, assignments, seed)


def split_train_val(indices, labels, ratio: tuple[int, int] = (70, 30),
                    seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/validation split of ``indices``.

    The training side gets ``ceil(n * a / (a + b))`` rows; that total is
    shared out per class by largest remainder, keeping at least one row of
    each class on both sides.
    """
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    a, b = ratio
    n = indices.size
    n_train = -(-n * a // (a + b))
    groups = [indices[labels[indices] == cls] for cls in (1, -1)]
    for cls, g in zip((1, -1), groups):
        if g.size < 2:
            raise ValueError(f"class {cls:+d} has {g.size} rows; need 2 to split")
    quotas = [g.size * a // (a + b) for g in groups]
    remainders = [g.size * a % (a + b) for g in groups]
    order = sorted(range(2), key=lambda i: (-remainders[i], -groups[i].size, i))
    for i in order[: n_train - sum(quotas)]:
        quotas[i] += 1
    quotas = [min(max(q, 1), g.size - 1) for q, g in zip(quotas, groups)]
    rng = np.random.default_rng(seed)
    train, val = [], []
    for q, g in zip(quotas, groups):
        g = rng.permutation(g)
        train.append(g[:q])
        val.append(g[q:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


# ---------------------------------------------------------------------------
# metrics


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(y_true, y_pred) -> dict[str, float]:
    """Accuracy and macro precision / recall / F1 over the two classes (0/0 := 0)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("need at least one example")
    prec, rec, f1 = [], [], []
    for cls in (1, -1):
        tp = float(np.sum((y_pred == cls) & (y_true == cls)))
        fp = float(np.sum((y_pred == cls) & (y_true != cls)))
        fn = float(np.sum((y_pred != cls) & (y_true == cls)))
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        prec.append(p)
        rec.append(r)
        f1.append(_safe_div(2 * p * r, p + r))
    return {
        "macro_f1": (f1[0] + f1[1]) / 2,
        "accuracy": float(np.mean(y_true == y_pred)),
        "macro_precision": (prec[0] + prec[1]) / 2,
        "macro_recall": (rec[0] + rec[1]) / 2,
    }


# ---------------------------------------------------------------------------
# model specs and grid search


@dataclass(frozen=True)
class ModelSpec:
    """A classifier family plus the grid its strength parameter is tuned over.

    ``strength`` is C for logistic / SVC, ``1 / alpha`` for ridge and k for
    KNN; LDA has no tuned parameter.
    """

    family: str  # logistic | svc | ridge | lda | knn
    penalty: str = "L2"
    grid: tuple = DEFAULT_GRID
    standardize: bool = False
    solver: str = "auto"

    @property
    def name(self) -> str:
        if self.family in ("logistic", "svc"):
            return f"{'LR' if self.family == 'logistic' else 'SVC'}_{self.penalty}"
        return self.family.upper()

    @property
    def tuned(self) -> bool:
        return self.family != "lda"

    def fit(self, X, y, strength=None, seed: int = 0, pool_hash: str = ""):
        if self.family == "logistic":
            return fit_logistic(X, y, self.penalty, strength, standardize=self.standardize,
                                seed=seed, pool_hash=pool_hash)[0]
        if self.family == "svc":
            return fit_linear_svc(X, y, self.penalty, strength, solver=self.solver,
                                  standardize=self.standardize, seed=seed, pool_hash=pool_hash)[0]
        if self.family == "ridge":
            return fit_ridge(X, y, 1.0 / strength, seed=seed, pool_hash=pool_hash)
        if self.family == "lda":
            return fit_lda(X, y, seed=seed, pool_hash=pool_hash)
        if self.family == "knn":
            return fit_knn(X, y, int(strength))
        raise ValueError(f"unknown model family {self.family!r}")


def grid_search(fit_fn: Callable, grid: Sequence, X_train, y_train, X_val, y_val,
                metric: str = "macro_f1") -> tuple[float, dict]:
    """Strength maximizing validation ``metric``; ties go to the smaller strength."""
    if len(grid) == 0:
        raise ValueError("empty grid")
    scores = {}
    for strength in sorted(grid):
        try:
            model = fit_fn(X_train, y_train, strength)
        except FitError:
            continue
        scores[strength] = compute_metrics(y_val, predict(model, X_val))[metric]
    if not scores:
        raise FitError("every fit in the grid failed")
    best = max(scores, key=lambda s: (scores[s], -s))
    return best, scores


def cv_grid_search(fit_fn: Callable, grid: Sequence, X, y, n_folds: int = 5, seed: int = 42,
                   metric: str = "macro_f1") -> tuple[float, dict]:
    """Grid search scored by mean ``metric`` over an inner stratified k-fold split."""
    plan = make_folds(y, n_folds, seed)
    totals = {s: 0.0 for s in sorted(grid)}
    for _, tr, te in plan.splits():
        for s in totals:
            try:
                model = fit_fn(X[tr], y[tr], s)
                totals[s] += compute_metrics(y[te], predict(model, X[te]))[metric] / n_folds
            except FitError:
                totals[s] = -math.inf
    if all(v == -math.inf for v in totals.values()):
        raise FitError("every fit in the grid failed")
    best = max(totals, key=lambda s: (totals[s], -s))
    return best, totals


# ---------------------------------------------------------------------------
# experiment runner


@dataclass
class FoldResult:
    fold: int
    metrics: Optional[dict]
    strength: Optional[float] = None
    nnz: Optional[int] = None
    train_idx: np.ndarray = field(default=None, repr=False)
    val_idx: np.ndarray = field(default=None, repr=False)
    test_idx: np.ndarray = field(default=None, repr=False)
    error: str = ""


@dataclass
class MetricReport:
    method: str
    folds: list[FoldResult]

    def _values(self, metric: str) -> np.ndarray:
        return np.array([f.metrics[metric] for f in self.folds if f.metrics is not None])

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(np.mean(self._values(m))) for m in METRICS}

    @property
    def std(self) -> dict[str, float]:
        out = {}
        for m in METRICS:
            v = self._values(m)
            out[m] = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return out

    def rows(self) -> list[list[str]]:
        rows = []
        for f in self.folds:
            if f.metrics is None:
                rows.append([self.method, str(f.fold + 1)] + ["error"] * len(METRICS) + ["", "", f.error])
                continue
            rows.append([self.method, str(f.fold + 1)]
                        + [f"{100 * f.metrics[m]:.2f}" for m in METRICS]
                        + ["" if f.strength is None else f"{f.strength:.6g}",
                           "" if f.nnz is None else str(f.nnz), ""])
        if self._values(METRICS[0]).size == 0:
            rows.append([self.method, "all"] + ["n/a"] * len(METRICS) + ["", "", "every fold failed"])
            return rows
        mean, std = self.mean, self.std
        rows.append([self.method, "all"]
                    + [f"{100 * mean[m]:.2f}±{100 * std[m]:.2f}" for m in METRICS] + ["", "", ""])
        return rows


REPORT_HEADER = ["method", "fold", "f1", "accuracy", "precision", "recall", "strength", "nnz", "error"]


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for rep in reports:
        writer.writerows(rep.rows())
    return buf.getvalue()


def format_table(reports: Sequence[MetricReport]) -> str:
    head = f"{'Method':<12}{'F1':>16}{'Acc.':>16}{'Prec.':>16}{'Rec.':>16}"
    lines = [head, "-" * len(head)]
    for rep in reports:
        if rep._values(METRICS[0]).size == 0:
            cells = ["n/a"] * len(METRICS)
        else:
            mean, std = rep.mean, rep.std
            cells = [f"{100 * mean[m]:.2f}±{100 * std[m]:.2f}" for m in METRICS]
        lines.append(f"{rep.method:<12}" + "".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)


def _run_fold(X, y, spec: ModelSpec, plan: FoldPlan, k: int, pool_hash: str) -> FoldResult:
    train_idx, test_idx = plan.train_indices(k), plan.test_indices(k)
    try:
        tr, va = split_train_val(train_idx, y, plan.inner_split, seed=plan.seed + k)
        strength = None
        if spec.tuned:
            strength, _ = grid_search(lambda A, b, s: spec.fit(A, b, s, plan.seed), spec.grid,
                                      X[tr], y[tr], X[va], y[va])
        model = spec.fit(X[train_idx], y[train_idx], strength, plan.seed, pool_hash)
        metrics = compute_metrics(y[test_idx], predict(model, X[test_idx]))
        nnz = getattr(model, "nnz", None)
        return FoldResult(k, metrics, strength, nnz, tr, va, test_idx)
    except (FitError, ValueError, np.linalg.LinAlgError) as exc:
        return FoldResult(k, None, None, None, None, None, test_idx, error=str(exc))


def run_experiment(X, y, spec: ModelSpec, plan: FoldPlan, *, n_jobs: int = 1,
                   pool_hash: str = "") -> MetricReport:
    """Per fold: inner split, grid search, refit on the training fold, score the test fold."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0] or plan.assignments.shape[0] != y.shape[0]:
        raise ValueError("X, y and the fold plan disagree on the number of rows")
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            folds = list(pool.map(lambda k: _run_fold(X, y, spec, plan, k, pool_hash),
                                  range(plan.n_folds)))
    else:
        folds = [_run_fold(X, y, spec, plan, k, pool_hash) for k in range(plan.n_folds)]
    return MetricReport(spec.name, sorted(folds, key=lambda f: f.fold))
