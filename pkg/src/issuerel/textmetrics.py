"""Diversity of generated text sets and inter-annotator agreement."""
from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NGRAM_ORDERS = (3, 4, 5)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# n-gram diversity


def sentence_bleu(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int) -> float:
    """BLEU with uniform weights over orders 1..n and the brevity penalty.

    Counts are clipped by the maximum count in any single reference. No
    smoothing: a zero precision at any order gives 0.
    """
    c = len(candidate)
    if c == 0 or not references:
        return 0.0
    log_p = 0.0
    for k in range(1, n + 1):
        cand = ngrams(candidate, k)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        best = Counter()
        for ref in references:
            for g, cnt in ngrams(ref, k).items():
                if cnt > best[g]:
                    best[g] = cnt
        matched = sum(min(cnt, best[g]) for g, cnt in cand.items())
        if matched == 0:
            return 0.0
        log_p += math.log(matched / total) / n
    # closest reference length, shorter one on ties
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p)


def self_bleu(corpus: Sequence[str], n: int = 4) -> float:
    """Mean BLEU-n of each text scored against all other texts as references."""
    if len(corpus) < 2:
        raise ValueError("self-BLEU needs at least two texts")
    toks = [tokenize(t) for t in corpus]
    scores = [sentence_bleu(t, toks[:i] + toks[i + 1:], n) for i, t in enumerate(toks)]
    return float(np.mean(scores))


def distinct_n(corpus: Sequence[str], n: int = 3) -> int:
    """Number of distinct n-grams over the whole corpus."""
    seen = set()
    for text in corpus:
        seen.update(ngrams(tokenize(text), n))
    return len(seen)


# ---------------------------------------------------------------------------
# embedding distances


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    """CSV with one row per text: id, then the vector components."""
    ids, rows = [], []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec:
                continue
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric embedding value") from None
            ids.append(rec[0])
    if not rows:
        raise ValueError(f"{path}: no embeddings")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows differ in width")
    return ids, np.array(rows)


def _pairwise_mean(A, B) -> float:
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return float(np.sqrt(np.maximum(d2, 0.0)).mean())


def embd(A, B) -> float:
    """Mean Euclidean distance over all pairs (a, b) with a in A and b in B."""
    A, B = _check_widths(A, B)
    return _pairwise_mean(A, B)


def self_embd(A) -> float:
    """``embd(A, A)``: the same all-pairs mean taken within one set."""
    return embd(A, A)


def _psd_eigvals(vals):
    # eigenvalues below the rank tolerance are rounding noise on a zero
    tol = vals.size * np.finfo(float).eps * max(float(np.abs(vals).max(initial=0.0)), 1e-300)
    return np.where(vals > tol, vals, 0.0)


def _sqrtm_psd(S):
    vals, vecs = np.linalg.eigh((S + S.T) / 2.0)
    return (vecs * np.sqrt(_psd_eigvals(vals))) @ vecs.T


def frechet_distance(mu1, S1, mu2, S2) -> float:
    """||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)) for PSD covariances.

    The trace of (S1 S2)^(1/2) is taken from the symmetric matrix
    S1^(1/2) S2 S1^(1/2), which has the same eigenvalues.
    """
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    S1, S2 = np.atleast_2d(S1), np.atleast_2d(S2)
    r1 = _sqrtm_psd(S1)
    M = r1 @ S2 @ r1
    cross = float(np.sqrt(_psd_eigvals(np.linalg.eigvalsh((M + M.T) / 2.0))).sum())
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(S1) + np.trace(S2) - 2.0 * cross)


def fbd(A, B) -> float:
    """Frechet distance between Gaussian fits (sample mean, ddof=1 covariance)."""
    A, B = _check_widths(A, B)
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise ValueError("need at least two vectors per set for a covariance")
    cov = lambda M: np.atleast_2d(np.cov(M, rowvar=False))
    return frechet_distance(A.mean(0), cov(A), B.mean(0), cov(B))


def _check_widths(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding width mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A, B


def embedding_distances(own, reference) -> tuple[float, float, float]:
    """(self_embd, embd, fbd) for two embedding matrices."""
    return self_embd(own), embd(own, reference), fbd(own, reference)


@dataclass
class DiversityReport:
    self_bleu: dict[int, float]
    distinct_n: dict[int, int]
    self_embd: Optional[float] = None
    embd: Optional[float] = None
    fbd: Optional[float] = None

    def rows(self) -> list[tuple[str, str]]:
        out = [(f"self_bleu_{n}", f"{v:.4f}") for n, v in self.self_bleu.items()]
        out += [(f"distinct_{n}", str(v)) for n, v in self.distinct_n.items()]
        for name in ("self_embd", "embd", "fbd"):
            v = getattr(self, name)
            if v is not None:
                out.append((name, f"{v:.4f}"))
        return out


def diversity_report(corpus: Sequence[str], orders: Sequence[int] = NGRAM_ORDERS,
                     own_embeddings=None, reference_embeddings=None) -> DiversityReport:
    rep = DiversityReport({n: self_bleu(corpus, n) for n in orders},
                          {n: distinct_n(corpus, n) for n in orders})
    if own_embeddings is not None:
        rep.self_embd = self_embd(own_embeddings)
        if reference_embeddings is not None:
            rep.embd = embd(own_embeddings, reference_embeddings)
            rep.fbd = fbd(own_embeddings, reference_embeddings)
    return rep


# ---------------------------------------------------------------------------
# agreement


def fleiss_kappa(table) -> Optional[float]:
    """Fleiss' kappa from an items x categories count table; None if chance agreement is 1."""
    T = np.asarray(table, dtype=float)
    if T.ndim != 2 or T.shape[0] == 0:
        raise ValueError("table must be a non-empty items x categories matrix")
    if np.any(T < 0):
        raise ValueError("counts must be non-negative")
    raters = T.sum(axis=1)
    r = raters[0]
    if r < 2 or np.any(raters != r):
        raise ValueError("every item needs the same number (>= 2) of ratings")
    p_item = ((T * T).sum(axis=1) - r) / (r * (r - 1))
    p_bar = float(p_item.mean())
    p_cat = T.sum(axis=0) / (T.shape[0] * r)
    p_e = float(p_cat @ p_cat)
    if p_e >= 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def cohen_kappa(labels_a, labels_b) -> Optional[float]:
    """Cohen's kappa for two label sequences; None if chance agreement is 1."""
    a, b = list(labels_a), list(labels_b)
    if len(a) != len(b):
        raise ValueError("label sequences differ in length")
    if not a:
        raise ValueError("no labels")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[c] * cb[c] for c in ca) / (n * n)
    if p_e >= 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def counts_table(annotations, categories=None) -> np.ndarray:
    """Items x categories counts from an items x raters label matrix."""
    rows = [list(r) for r in annotations]
    if categories is None:
        categories = sorted({v for r in rows for v in r}, key=str)
    index = {c: k for k, c in enumerate(categories)}
    T = np.zeros((len(rows), len(categories)), dtype=int)
    for i, r in enumerate(rows):
        for v in r:
            T[i, index[v]] += 1
    return T


@dataclass
class AgreementReport:
    fleiss_kappa: Optional[float]
    cohen_pairs: dict[tuple, Optional[float]] = field(default_factory=dict)


def agreement_report(annotations, rater_names: Optional[Sequence[str]] = None) -> AgreementReport:
    """Fleiss over all raters plus Cohen for every rater pair (items x raters input)."""
    rows = [list(r) for r in annotations]
    k = len(rows[0]) if rows else 0
    if k < 2 or any(len(r) != k for r in rows):
        raise ValueError("need a fixed number (>= 2) of raters per item")
    names = list(rater_names) if rater_names is not None else [f"r{i + 1}" for i in range(k)]
    pairs = {}
    for i, j in itertools.combinations(range(k), 2):
        pairs[(names[i], names[j])] = cohen_kappa([r[i] for r in rows], [r[j] for r in rows])
    return AgreementReport(fleiss_kappa(counts_table(rows)), pairs)
