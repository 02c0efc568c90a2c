"""Brute-force reference computations used by the tests."""
import itertools

import numpy as np


def objective_grid(X, y, W, B, loss, lam):
    """Penalized objective at every (w, b) row of ``W`` / entry of ``B``."""
    m = y[None, :] * (W @ X.T + B[:, None])
    if loss == "logistic":
        data = np.logaddexp(0.0, -m).mean(axis=1)
    else:
        data = np.maximum(0.0, 1.0 - m).mean(axis=1)
    return data + lam * np.abs(W).sum(axis=1)


def grid_minimum(X, y, loss, lam, b_box=20.0, points=25, rounds=40, shrink=0.5):
    """Exhaustive grid search over (w, b), zoomed around the best cell.

    The objective is convex, so shrinking the box around the incumbent
    cannot skip the global minimum once the grid resolves its basin. Any
    minimizer has ``lam * ||w||_1 <= objective(0, b)``, which sets the box.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    h = X.shape[1]
    w_box = min(objective_grid(X, y, np.zeros((1, h)), np.array([b]), loss, lam)[0]
                for b in np.linspace(-b_box, b_box, 81)) / lam
    center = np.zeros(h + 1)
    half = np.array([w_box] * h + [b_box])
    best = (np.inf, center)
    for _ in range(rounds):
        axes = [np.linspace(c - r, c + r, points) for c, r in zip(center, half)]
        pts = np.array(list(itertools.product(*axes)))
        vals = objective_grid(X, y, pts[:, :h], pts[:, h], loss, lam)
        k = int(np.argmin(vals))
        if vals[k] < best[0]:
            best = (float(vals[k]), pts[k])
        center = best[1]
        half = half * shrink
    return best


def central_difference(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def hinge_vertex_minimum(X, y, lam):
    """Exact L1-hinge minimum by enumerating vertices of the kink arrangement.

    The objective is convex and piecewise linear in (w, b) with kinks on the
    hyperplanes ``y_i (w.x_i + b) = 1`` and ``w_j = 0``; a minimum is attained
    at a point where h + 1 independent kinks meet.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, h = X.shape
    rows = [np.append(y[i] * X[i], y[i]) for i in range(n)] + [np.eye(h + 1)[j] for j in range(h)]
    rhs = [1.0] * n + [0.0] * h
    best = (np.inf, None)
    for combo in itertools.combinations(range(n + h), h + 1):
        A = np.array([rows[c] for c in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        p = np.linalg.solve(A, np.array([rhs[c] for c in combo]))
        val = float(objective_grid(X, y, p[None, :h], p[h:], "hinge", lam)[0])
        if val < best[0]:
            best = (val, p)
    return best


def restricted_minimum(X, y, loss, lam, support):
    """Minimum of the L1 objective with weights outside ``support`` held at zero."""
    Xs = np.asarray(X, float)[:, list(support)]
    if loss == "hinge":
        return hinge_vertex_minimum(Xs, y, lam)[0]
    return grid_minimum(Xs, y, loss, lam, points=15, rounds=35)[0]


def brute_force_nnz(X, y, loss, lam, tol=1e-7):
    """Smallest support size whose restricted minimum reaches the global one."""
    h = np.asarray(X).shape[1]
    by_size = [min(restricted_minimum(X, y, loss, lam, s) for s in itertools.combinations(range(h), k))
               for k in range(h + 1)]
    best = min(by_size)
    return next(k for k, v in enumerate(by_size) if v <= best + tol)
