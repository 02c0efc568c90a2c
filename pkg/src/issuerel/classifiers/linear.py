"""Penalized linear classifiers over verifier-score features.

Objectives use the mean loss plus a penalty with ``lam = 1 / (n * C)``:

* logistic, L1: ``mean(log(1 + exp(-y (w.x + b)))) + lam * ||w||_1``
* logistic, L2: ``mean(log(1 + exp(-y (w.x + b)))) + lam / 2 * ||w||^2``
* hinge, L1:    ``mean(max(0, 1 - y (w.x + b))) + lam * ||w||_1``
* hinge, L2:    ``mean(max(0, 1 - y (w.x + b))) + lam / 2 * ||w||^2``

The intercept is never penalized. Features are centered internally before
solving (an exact reparametrization of the intercept) which keeps coordinate
descent well conditioned on the all-positive probability features.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import expit
from scipy.stats import norm

from . import kernels

NONZERO_TOL = 1e-10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10_000


class FitError(ValueError):
    """Training data violates a fitter precondition."""


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    penalty: str  # "L1", "L2" or "none"
    strength: float  # C; inf when unregularized
    loss: str  # "logistic", "hinge", "squared" or "discriminant"
    seed: int = 0
    pool_hash: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def h(self) -> int:
        return self.weights.shape[0]

    @property
    def nnz(self) -> int:
        return int(np.sum(np.abs(self.weights) > NONZERO_TOL))

    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.weights) > NONZERO_TOL)


@dataclass(frozen=True)
class FitDiagnostics:
    final_objective: float
    iterations: int
    converged: bool
    nnz: int
    wall_time: float
    residual: float = float("nan")
    solver: str = ""
    objective_trace: tuple = ()


# ---------------------------------------------------------------------------
# shared helpers


def soft_threshold(z: float, t: float) -> float:
    """Proximal operator of ``t * |.|``: sign(z) * max(|z| - t, 0)."""
    return kernels.soft_threshold(float(z), float(t))


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise FitError("X must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise FitError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise FitError("need at least 2 examples")
    if not np.all(np.isfinite(X)):
        raise FitError("non-finite feature values")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise FitError("labels must be +1 / -1")
    if np.all(y == y[0]):
        raise FitError("single-class input: both labels must be present")
    return X, y


def _lam(n: int, C: float) -> float:
    if not C > 0:
        raise FitError(f"strength C must be positive, got {C}")
    return 1.0 / (n * C)


def _standardize(X, standardize):
    mean = X.mean(axis=0)
    scale = X.std(axis=0) if standardize else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def _unstandardize(w, b, mean, scale):
    w_raw = w / scale
    return w_raw, b - float(w_raw @ mean)


def penalized_objective(X, y, w, b, loss: str, penalty: str, C: float) -> float:
    """Mean loss plus penalty at (w, b), evaluated directly."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lam = 1.0 / (X.shape[0] * C)
    m = y * (X @ w + b)
    if loss == "logistic":
        data = float(np.mean(np.logaddexp(0.0, -m)))
    elif loss == "hinge":
        data = float(np.mean(np.maximum(0.0, 1.0 - m)))
    else:
        raise ValueError(f"unknown loss {loss!r}")
    if penalty == "L1":
        return data + lam * float(np.abs(w).sum())
    return data + 0.5 * lam * float(w @ w)


def logistic_gradient(X, y, w, b) -> tuple[np.ndarray, float]:
    """Gradient of the mean logistic loss with respect to (w, b)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    s = expit(-y * (X @ w + b))
    return -(X.T @ (y * s)) / n, -float(np.sum(y * s)) / n


def l1_logistic_residual(X, y, w, b, lam) -> float:
    """Sup-norm of the minimum-norm subgradient of the L1-logistic objective."""
    gw, gb = logistic_gradient(X, y, w, b)
    nz = np.abs(w) > 0
    r = np.where(nz, np.abs(gw + lam * np.sign(w)), np.maximum(np.abs(gw) - lam, 0.0))
    return float(max(r.max(initial=0.0), abs(gb)))


def logistic_lambda_max(X, y) -> float:
    """Smallest lam for which w = 0 solves the L1-logistic problem."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    return float(np.max(np.abs(y @ (X - X.mean(axis=0)))) / (2 * n))


def hinge_lambda_bound(X) -> float:
    """A lam above which w = 0 is the unique L1-SVC solution.

    The hinge is 1-Lipschitz in the margin, so any w != 0 costs at least
    ``(lam - max_j mean_i |x_ij - xbar_j|) * ||w||_1`` more than w = 0.
    """
    X = np.asarray(X, dtype=float)
    return float(np.max(np.mean(np.abs(X - X.mean(axis=0)), axis=0)))


def strength_for_lambda(lam: float, n: int) -> float:
    return 1.0 / (n * lam)


# ---------------------------------------------------------------------------
# logistic regression


def _fit_l1_logistic(Xc, y, lam, tol, max_iter):
    n, h = Xc.shape
    Xf = np.asfortranarray(Xc)
    npos = float(np.sum(y > 0))
    w = np.zeros(h)
    b = math.log(npos / (n - npos))
    w, b, iterations, ok, objs = kernels.cd_logistic_l1(Xf, y, lam, w, b, tol, max_iter)
    residual = l1_logistic_residual(Xc, y, w, b, lam)
    trace = objs.tolist()
    return w, b, iterations, bool(ok and residual <= tol), residual, trace


def _fit_l2_logistic(Xc, y, lam, tol, max_iter):
    n, h = Xc.shape
    A = np.hstack([Xc, np.ones((n, 1))])
    theta = np.zeros(h + 1)
    reg = np.full(h + 1, lam)
    reg[-1] = 0.0

    def objective(th):
        m = y * (A @ th)
        return float(np.mean(np.logaddexp(0.0, -m))) + 0.5 * float(np.sum(reg * th * th))

    f = objective(theta)
    trace = [f]
    grad_norm = float("inf")
    it = 0
    for it in range(1, max_iter + 1):
        m = y * (A @ theta)
        s = expit(-m)
        grad = -(A.T @ (y * s)) / n + reg * theta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            it -= 1
            break
        wts = s * (1.0 - s)
        H = (A.T * wts) @ A / n + np.diag(reg) + 1e-12 * np.eye(h + 1)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f - 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            break
        theta, f = cand, fc
        trace.append(f)
    return theta[:h], float(theta[h]), it, grad_norm <= tol, grad_norm, trace


def fit_logistic(X, y, penalty: str = "L1", C: float = 1.0, *, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, standardize: bool = False,
                 seed: int = 0, pool_hash: str = "") -> tuple[LinearModel, FitDiagnostics]:
    """Fit penalized logistic regression.

    L1 uses cyclic coordinate descent with soft-thresholded proximal Newton
    coordinate steps; L2 uses damped Newton iterations.
    """
    X, y = check_training_data(X, y)
    lam = _lam(X.shape[0], C)
    start = time.perf_counter()
    Xc, mean, scale = _standardize(X, standardize)
    if penalty == "L1":
        w, b, iters, conv, resid, trace = _fit_l1_logistic(Xc, y, lam, tol, max_iter)
        solver = f"cd[{kernels.BACKEND}]"
    elif penalty == "L2":
        w, b, iters, conv, resid, trace = _fit_l2_logistic(Xc, y, lam, tol, max_iter)
        solver = "newton"
    else:
        raise FitError(f"unknown penalty {penalty!r}")
    w, b = _unstandardize(w, b, mean, scale)
    model = LinearModel(w, b, penalty, C, "logistic", seed, pool_hash)
    diag = FitDiagnostics(
        final_objective=penalized_objective(X, y, w, b, "logistic", penalty, C) if not standardize
        else trace[-1],
        iterations=iters, converged=conv, nnz=model.nnz,
        wall_time=time.perf_counter() - start, residual=resid, solver=solver,
        objective_trace=tuple(trace),
    )
    return model, diag


# ---------------------------------------------------------------------------
# linear SVC


def _l1_svc_lp(X, y, lam):
    n, h = X.shape
    # variables: w+ (h), w- (h), b (free), slack (n)
    c = np.concatenate([np.full(2 * h, lam), [0.0], np.full(n, 1.0 / n)])
    yX = sparse.csr_matrix(y[:, None] * X)
    A = sparse.hstack([-yX, yX, sparse.csr_matrix(-y[:, None]), -sparse.identity(n)], format="csr")
    bounds = [(0, None)] * (2 * h) + [(None, None)] + [(0, None)] * n
    res = linprog(c, A_ub=A, b_ub=-np.ones(n), bounds=bounds, method="highs")
    if res.status != 0:
        raise FitError(f"LP solver failed: {res.message}")
    w = res.x[:h] - res.x[h:2 * h]
    w[np.abs(w) <= 1e-12] = 0.0
    return w, float(res.x[2 * h]), int(res.nit), True, 0.0, [float(res.fun)]


def _svc_subgradient(X, y, lam, l1, max_iter, tol, stage_len=None):
    """Restarted proximal subgradient descent.

    Each stage runs ``eta / sqrt(t + 1)`` steps from the best point so far;
    the base step doubles when the stage's best iterate came late (still
    descending) and halves otherwise.
    """
    n, h = X.shape
    stage_len = stage_len or max(50, max_iter // 50)
    w = np.zeros(h)
    b = 0.0
    best = float("inf")
    eta = 1.0
    used = 0
    trace = []
    quiet = 0
    while used < max_iter and eta > 1e-12:
        T = min(stage_len, max_iter - used)
        bw, bb, obj, t_best = kernels.prox_subgradient_hinge(X, y, lam, l1, w, b, T, eta)
        used += T
        gain = best - obj
        if obj < best:
            best, w, b = obj, np.asarray(bw, dtype=float), bb
        trace.append(best)
        quiet = quiet + 1 if gain <= tol * max(1.0, abs(best)) else 0
        if quiet >= 8:
            break
        eta = eta * 2.0 if t_best > T // 2 else eta * 0.5
    return w, b, used, quiet >= 8, float("nan"), trace


def fit_linear_svc(X, y, penalty: str = "L1", C: float = 1.0, *, solver: str = "auto",
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   standardize: bool = False, seed: int = 0,
                   pool_hash: str = "") -> tuple[LinearModel, FitDiagnostics]:
    """Fit a linear SVM on the hinge loss.

    ``solver="auto"`` picks the exact LP for L1 and restarted proximal
    subgradient descent for L2; ``solver="subgradient"`` forces the latter.
    """
    X, y = check_training_data(X, y)
    lam = _lam(X.shape[0], C)
    if penalty not in ("L1", "L2"):
        raise FitError(f"unknown penalty {penalty!r}")
    if solver == "auto":
        solver = "lp" if penalty == "L1" else "subgradient"
    start = time.perf_counter()
    Xc, mean, scale = _standardize(X, standardize)
    if solver == "lp":
        if penalty != "L1":
            raise FitError("the LP solver handles the L1 penalty only")
        w, b, iters, conv, resid, trace = _l1_svc_lp(Xc, y, lam)
    elif solver == "subgradient":
        w, b, iters, conv, resid, trace = _svc_subgradient(Xc, y, lam, penalty == "L1", max_iter, tol)
        solver = f"subgradient[{kernels.BACKEND}]"
    else:
        raise FitError(f"unknown solver {solver!r}")
    w, b = _unstandardize(w, b, mean, scale)
    model = LinearModel(w, b, penalty, C, "hinge", seed, pool_hash)
    diag = FitDiagnostics(
        final_objective=penalized_objective(X, y, w, b, "hinge", penalty, C) if not standardize
        else trace[-1],
        iterations=iters, converged=conv, nnz=model.nnz,
        wall_time=time.perf_counter() - start, residual=resid, solver=solver,
        objective_trace=tuple(trace),
    )
    return model, diag


# ---------------------------------------------------------------------------
# prediction and inference


def decision_scores(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.h:
        raise ValueError(f"expected {model.h} feature columns, got shape {X.shape}")
    if hasattr(model, "decision_scores"):
        return model.decision_scores(X)
    return X @ model.weights + model.intercept


def predict(model, X) -> np.ndarray:
    """Labels in {+1, -1}; a decision score of exactly 0 maps to +1."""
    return np.where(decision_scores(model, X) >= 0.0, 1, -1)


def wald_pvalues(model: LinearModel, X, y) -> np.ndarray:
    """Two-sided Wald z-test p-values for the weights of a logistic model.

    The covariance is the inverse observed information of the summed
    penalized negative log-likelihood at the fitted point.
    """
    if model.loss != "logistic":
        raise ValueError("Wald p-values are defined for logistic models only")
    X = np.asarray(X, dtype=float)
    n, h = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    p = expit(A @ np.append(model.weights, model.intercept))
    info = (A.T * (p * (1.0 - p))) @ A
    if model.penalty == "L2" and np.isfinite(model.strength):
        info[:h, :h] += np.eye(h) / model.strength
    cov = np.linalg.pinv(info)
    se = np.sqrt(np.clip(np.diag(cov)[:h], 1e-300, None))
    return 2.0 * norm.sf(np.abs(model.weights / se))


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: LinearModel) -> dict:
    return {
        "weights": [float(v) for v in model.weights],
        "intercept": model.intercept,
        "penalty": model.penalty,
        "strength": model.strength if np.isfinite(model.strength) else "inf",
        "loss": model.loss,
        "seed": model.seed,
        "pool_hash": model.pool_hash,
        "meta": model.meta,
    }


def model_from_dict(d: dict) -> LinearModel:
    strength = float("inf") if d["strength"] == "inf" else float(d["strength"])
    return LinearModel(np.array(d["weights"], dtype=float), d["intercept"], d["penalty"],
                       strength, d["loss"], d.get("seed", 0), d.get("pool_hash", ""),
                       d.get("meta", {}))


def save_model(model: LinearModel, path: str | Path, extra: Optional[dict] = None) -> None:
    doc = model_to_dict(model)
    if extra:
        doc.update(extra)
    # json writes floats with repr(), the shortest exact round-trip decimal
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: str | Path) -> LinearModel:
    return model_from_dict(json.loads(Path(path).read_text()))
