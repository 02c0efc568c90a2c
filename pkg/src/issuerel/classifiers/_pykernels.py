"""Pure numpy solver kernels.

Same signatures and arithmetic as the compiled ``_ckernels`` module; used when
the extension is not built or ``ISSUEREL_KERNELS=python`` is set.
"""
import numpy as np

ARMIJO = 0.01
MAX_BACKTRACK = 30
MAX_INNER = 1000


def soft_threshold(z, t):
    if t < 0:
        raise ValueError("threshold must be non-negative")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _logloss_sum(z):
    # sum_i log(1 + exp(-z_i)), overflow safe
    return float(np.sum(np.logaddexp(0.0, -z)))


def _sig_neg(z):
    # 1 / (1 + exp(z))
    return 0.5 * (1.0 - np.tanh(0.5 * z))


def kkt_residual(g, gb, w, lam):
    """Largest violation of the L1 optimality conditions (intercept included)."""
    viol = np.where(w != 0.0, np.abs(g + lam * np.sign(w)), np.maximum(np.abs(g) - lam, 0.0))
    return max(float(viol.max(initial=0.0)), abs(gb))


def _quadratic_cd(X, g, gb, v, hd, hb, w, lam, inner_tol, max_sweeps):
    """Coordinate descent on the local quadratic model of the loss.

    Minimizes g.d + gb*db + 1/2 mean(v * (X d + db)^2) + lam * ||w + d||_1 and
    returns (u, db, r, sweeps) with u = w + d and r = X d + db.
    """
    n, h = X.shape
    u = w.copy()
    db = 0.0
    r = np.zeros(n)
    full = True
    sweeps = 0
    while sweeps < max_sweeps:
        coords = range(h) if full else np.flatnonzero(u)
        max_change = 0.0
        for j in coords:
            xj = X[:, j]
            gj = g[j] + float(xj @ (v * r)) / n
            uj = u[j]
            if uj == 0.0 and abs(gj) <= lam:
                continue
            hj = hd[j]
            new = soft_threshold(uj - gj / hj, lam / hj)
            delta = new - uj
            if delta != 0.0:
                u[j] = new
                r += delta * xj
                max_change = max(max_change, hj * abs(delta))
        delta = -(gb + float(v @ r) / n) / hb
        db += delta
        r += delta
        max_change = max(max_change, hb * abs(delta))
        sweeps += 1
        if max_change <= inner_tol:
            if full:
                break
            full = True
        else:
            full = False
    return u, db, r, sweeps


def cd_logistic_l1(X, y, lam, w, b, tol, max_iter):
    """Proximal Newton for mean logistic loss + lam * ||w||_1 with unpenalized b.

    Each outer iteration builds the quadratic model of the loss at (w, b),
    minimizes model + penalty by coordinate descent, and moves along the
    resulting direction with Armijo backtracking. Stops once the optimality
    residual is at most ``tol``. ``w`` is updated in place. Returns
    (w, b, n_outer, converged, objectives) where ``objectives[k]`` is the
    penalized objective after outer step k.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, h = X.shape
    z = y * (X @ w + b)
    f = _logloss_sum(z) / n + lam * float(np.abs(w).sum())
    objectives = []
    converged = False
    it = 0
    while True:
        s = _sig_neg(z)
        gz = -y * s / n
        g = X.T @ gz
        gb = float(gz.sum())
        res = kkt_residual(g, gb, w, lam)
        if res <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        v = np.maximum(s * (1.0 - s), 1e-10)
        hd = np.maximum((X * X).T @ v / n, 1e-12)
        hb = float(v.sum()) / n
        inner_tol = max(0.1 * res, 0.01 * tol)
        u, db, r, _ = _quadratic_cd(X, g, gb, v, hd, hb, w, lam, inner_tol, MAX_INNER)
        d = u - w
        delta = float(g @ d) + gb * db + lam * (float(np.abs(u).sum()) - float(np.abs(w).sum()))
        if not delta < 0.0:
            break
        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            zt = z + t * y * r
            ft = _logloss_sum(zt) / n + lam * float(np.abs(w + t * d).sum())
            if ft <= f + ARMIJO * t * delta:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        w += t * d
        b += t * db
        z = zt
        f = ft
        objectives.append(f)
        it += 1
    return w, b, it, converged, np.array(objectives)


def prox_subgradient_hinge(X, y, lam, l1, w, b, n_iter, eta0):
    """One stage of proximal subgradient descent on mean hinge loss + penalty.

    The penalty is ``lam * ||w||_1`` when ``l1`` is true, else
    ``lam / 2 * ||w||_2^2``; step size ``eta0 / sqrt(t + 1)``. Returns
    (w_best, b_best, best_objective, t_best) over the ``n_iter + 1`` iterates.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    w = np.array(w, dtype=float)
    best_w, best_b, best, best_t = w.copy(), b, np.inf, 0
    for t in range(n_iter + 1):
        m = y * (X @ w + b)
        pen = lam * float(np.abs(w).sum()) if l1 else 0.5 * lam * float(w @ w)
        obj = float(np.maximum(0.0, 1.0 - m).sum()) / n + pen
        if obj < best:
            best, best_w, best_b, best_t = obj, w.copy(), b, t
        if t == n_iter:
            break
        active = m < 1.0
        ya = y[active]
        gw = -(ya @ X[active]) / n
        gb = -float(ya.sum()) / n
        eta = eta0 / np.sqrt(t + 1.0)
        v = w - eta * gw
        if l1:
            w = np.sign(v) * np.maximum(np.abs(v) - eta * lam, 0.0)
        else:
            w = v / (1.0 + eta * lam)
        b -= eta * gb
    return best_w, best_b, best, best_t
