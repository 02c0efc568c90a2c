"""Synthetic designs with known selection structure."""
from __future__ import annotations

import numpy as np


def _labels(signal):
    return np.where(signal >= 0, 1.0, -1.0)


def informative_noise_design(n: int = 300, n_informative: int = 3, n_noise: int = 97,
                             seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Labels are the sign of the sum of the first ``n_informative`` columns.

    All columns are independent standard normals, so the informative ones
    jointly determine the label exactly while the rest carry nothing.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_informative + n_noise))
    return X, _labels(X[:, :n_informative].sum(axis=1))


def correlated_cluster_design(n: int = 300, n_clusters: int = 10, cluster_size: int = 10,
                              n_informative: int = 5, noise: float = 0.1,
                              label_noise: float = 0.5,
                              seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Each cluster duplicates one latent factor with independent column noise.

    Returns ``(X, y, cluster)`` where ``cluster[j]`` is the cluster of column j
    and ``y`` is the sign of the summed latent factors of the first
    ``n_informative`` clusters plus Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n_clusters))
    cluster = np.repeat(np.arange(n_clusters), cluster_size)
    X = z[:, cluster] + noise * rng.standard_normal((n, n_clusters * cluster_size))
    y = _labels(z[:, :n_informative].sum(axis=1) + label_noise * rng.standard_normal(n))
    return X, y, cluster


def independent_informative_design(n: int = 300, h: int = 10, effect: float = 1.0,
                                   seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Independent columns whose class means differ by ``effect`` (in units of
    standard deviation), with per-column effects drawn between 0.2 and 1 so the
    true weights are spread out."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    scale = rng.uniform(0.2, 1.0, h) * effect
    X = rng.standard_normal((n, h)) + 0.5 * y[:, None] * scale[None, :]
    if np.all(y > 0) or np.all(y < 0):
        y[0] = -y[0]
    return X, y


def separable_design(n: int = 200, h: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Balanced classes split by a wide margin on the first column."""
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, h))
    X[:, 0] = 3.0 * y + 0.5 * rng.uniform(-1, 1, n)
    return X, y
