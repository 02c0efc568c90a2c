"""Closed-form and distance-based reference classifiers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import FitError, LinearModel, check_training_data

LDA_SHRINKAGE = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0)
MIN_VARIANCE = 1e-12
MAX_CONDITION = 1e8


def fit_ridge(X, y, alpha: float = 1.0, *, seed: int = 0, pool_hash: str = "") -> LinearModel:
    """Least squares on +-1 targets with penalty ``alpha * ||w||^2``.

    Columns and targets are centered so the intercept is unpenalized:
    ``w = (Xc'Xc + alpha I)^-1 Xc'yc`` and ``b = mean(y) - mean(X) . w``.
    """
    X, y = check_training_data(X, y)
    if not alpha > 0:
        raise FitError(f"alpha must be positive, got {alpha}")
    mean = X.mean(axis=0)
    Xc = X - mean
    ybar = float(y.mean())
    h = X.shape[1]
    w = np.linalg.solve(Xc.T @ Xc + alpha * np.eye(h), Xc.T @ (y - ybar))
    return LinearModel(w, ybar - float(mean @ w), "L2", 1.0 / alpha, "squared", seed, pool_hash)


def fit_lda(X, y, *, seed: int = 0, pool_hash: str = "") -> LinearModel:
    """Two-class Fisher discriminant with diagonal-target shrinkage.

    Columns that are constant within both classes get weight 0 when the class
    means agree; when they differ the column keeps a small variance floor
    and dominates the discriminant. On the remaining columns the pooled within-class covariance S is replaced by ``(1 - g) S + g diag(S)``
    for the first g in ``LDA_SHRINKAGE`` that brings the condition number
    under ``MAX_CONDITION``; the g used is recorded in ``model.meta["shrinkage"]``.
    """
    X, y = check_training_data(X, y)
    n, h = X.shape
    pos, neg = X[y > 0], X[y < 0]
    mu_p, mu_n = pos.mean(axis=0), neg.mean(axis=0)
    resid = np.vstack([pos - mu_p, neg - mu_n])
    S_full = resid.T @ resid / max(n - 2, 1)
    var = np.diag(S_full)
    flat = var <= MIN_VARIANCE
    keep = np.flatnonzero(~flat | (mu_p != mu_n))
    S = S_full[np.ix_(keep, keep)]
    floor = 1e-6 * (float(var[~flat].mean()) if np.any(~flat) else 1.0)
    S[np.diag_indices_from(S)] += np.where(flat[keep], floor, 0.0)
    D = np.diag(np.diag(S))
    for gamma in LDA_SHRINKAGE:
        S_g = (1.0 - gamma) * S + gamma * D
        cond = np.linalg.cond(S_g) if keep.size else 1.0
        if np.isfinite(cond) and cond < MAX_CONDITION:
            break
    else:
        raise FitError("degenerate within-class covariance even at full shrinkage")
    w = np.zeros(h)
    if keep.size:
        w[keep] = np.linalg.solve(S_g, (mu_p - mu_n)[keep])
    prior = np.log(len(pos) / len(neg))
    b = -0.5 * float(w @ (mu_p + mu_n)) + prior
    return LinearModel(w, b, "none", float("inf"), "discriminant", seed, pool_hash,
                       {"shrinkage": gamma, "condition": float(cond)})


@dataclass(frozen=True)
class KNNModel:
    """Euclidean k-nearest-neighbour majority vote over stored training rows."""

    X: np.ndarray
    y: np.ndarray
    k: int

    @property
    def h(self) -> int:
        return self.X.shape[1]

    def decision_scores(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        d2 = ((Q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        # stable sort: equal distances resolve to the earlier training row
        idx = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y[idx].mean(axis=1)


def fit_knn(X, y, k: int = 5) -> KNNModel:
    X, y = check_training_data(X, y)
    if k < 1 or k % 2 == 0:
        raise FitError(f"k must be a positive odd integer, got {k}")
    if k > X.shape[0]:
        raise FitError(f"k={k} exceeds the {X.shape[0]} training rows")
    return KNNModel(X.copy(), y.copy(), int(k))
