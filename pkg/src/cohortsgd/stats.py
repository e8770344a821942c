"""Percentile selection, rank correlation and the other statistical
primitives the optimizer and the evaluation protocols are built from."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc, expit

from .core import SparseMatrix
from .errors import DimensionMismatch, EmptyInput, ZeroVariance

# Slack for alpha * n landing a hair above an integer (0.7 * 10 = 7.000000000000001).
_RANK_EPS = 1e-9


@dataclass(frozen=True)
class PercentileSelection:
    indices: np.ndarray
    threshold: float

    def __len__(self):
        return int(self.indices.size)


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def nearest_rank(alpha: float, n: int) -> int:
    """1-based nearest-rank position of the alpha-th percentile of ``n`` values."""
    return max(1, math.ceil(alpha * n - _RANK_EPS))


def percentile(r, alpha: float) -> float:
    """Nearest-rank percentile: the ``ceil(alpha * n)``-th smallest element.

    No interpolation, so the result is always a member of ``r``.
    """
    r = np.asarray(r, dtype=np.float64).ravel()
    if r.size == 0:
        raise EmptyInput("percentile of an empty vector")
    _check_alpha(alpha)
    k = nearest_rank(alpha, r.size) - 1
    return float(np.partition(r, k)[k])


def percentile_select(r, alpha: float) -> PercentileSelection:
    """Indices ``i`` with ``r[i] >= percentile(r, alpha)``; ties all included."""
    r = np.asarray(r, dtype=np.float64).ravel()
    thr = percentile(r, alpha)
    return PercentileSelection(np.flatnonzero(r >= thr), thr)


def select_by(s, r, alpha: float):
    """Rows of ``s`` whose matching entry of ``r`` is in the alpha-th percentile."""
    n = s.n_rows if isinstance(s, SparseMatrix) else len(s)
    r = np.asarray(r, dtype=np.float64).ravel()
    if n != r.size:
        raise DimensionMismatch(f"|s| = {n} but |r| = {r.size}")
    idx = percentile_select(r, alpha).indices
    if isinstance(s, SparseMatrix):
        return s.take_rows(idx)
    return np.asarray(s)[idx]


def harmonic_mean(a: float, b: float) -> float:
    if a < 0 or b < 0:
        raise ValueError(f"harmonic mean needs non-negative inputs, got ({a}, {b})")
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def rankdata(a) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    a = np.asarray(a, dtype=np.float64).ravel()
    n = a.size
    order = np.argsort(a, kind="mergesort")
    sa = a[order]
    edges = np.flatnonzero(np.concatenate(([True], sa[1:] != sa[:-1], [True])))
    mean_rank = (edges[:-1] + edges[1:] + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(mean_rank, np.diff(edges))
    return ranks


def _pearson_centered(rc, sc):
    den = math.sqrt(float(rc @ rc) * float(sc @ sc))
    if den == 0.0:
        raise ZeroVariance("rank variance is zero")
    return min(1.0, max(-1.0, float(rc @ sc) / den))


def spearman_rho(r, s) -> float:
    """Spearman's rho without the p-value (hot-path variant)."""
    rr = rankdata(r)
    ss = rankdata(s)
    if rr.size != ss.size:
        raise DimensionMismatch(f"|r| = {rr.size} but |s| = {ss.size}")
    return _pearson_centered(rr - rr.mean(), ss - ss.mean())


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int8)


def _t_pvalue(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    df = n - 2
    t2 = rho * rho * df / (1.0 - rho * rho)
    return float(betainc(0.5 * df, 0.5, df / (df + t2)))


def _exact_pvalue(rr, ss, rho) -> float:
    rc = rr - rr.mean()
    sc = ss - ss.mean()
    perms = _permutations(rr.size)
    num = sc[perms] @ rc
    null = num / math.sqrt(float(rc @ rc) * float(sc @ sc))
    return float(np.mean(np.abs(null) >= abs(rho) - 1e-12))


def spearman(r, s) -> tuple[float, float]:
    """Spearman's rank correlation and its two-sided p-value.

    The p-value uses the Student-t approximation for ``n >= 10`` and the
    exact permutation distribution over all ``n!`` orderings below that.
    Raises :class:`ZeroVariance` when either input is constant.
    """
    rr = rankdata(r)
    ss = rankdata(s)
    n = rr.size
    if n != ss.size:
        raise DimensionMismatch(f"|r| = {n} but |s| = {ss.size}")
    if n < 2:
        raise EmptyInput("spearman needs at least two observations")
    rho = _pearson_centered(rr - rr.mean(), ss - ss.mean())
    if n >= 10:
        p = _t_pvalue(rho, n)
    else:
        p = _exact_pvalue(rr, ss, rho)
    return rho, min(1.0, p)


def softmax_normalize(d) -> np.ndarray:
    """Map signed distances to independent likelihoods in [0, 1].

    Standardized logistic: ``1 / (1 + exp(-(d - mean) / std))`` with the
    population standard deviation; a constant input maps to 0.5 everywhere.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size == 0:
        raise EmptyInput("cannot normalize an empty vector")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    mu = d.mean()
    sigma = d.std()
    if sigma == 0.0:
        return np.full(d.size, 0.5)
    return expit((d - mu) / sigma)


def _as_dense_row(u):
    if isinstance(u, SparseMatrix):
        if u.n_rows != 1:
            raise DimensionMismatch("expected a single-row matrix")
        return u.toarray()[0]
    return np.asarray(u, dtype=np.float64).ravel()


def cosine_similarity(u, v) -> float:
    u = _as_dense_row(u)
    v = _as_dense_row(v)
    if u.size != v.size:
        raise DimensionMismatch(f"|u| = {u.size} but |v| = {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity of a zero-norm row")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _unit_rows(rows: SparseMatrix):
    norms = rows.row_norms()
    if np.any(norms == 0):
        raise ValueError(f"zero-norm row {int(np.flatnonzero(norms == 0)[0])}")
    scale = np.repeat(1.0 / norms, np.diff(rows.indptr))
    return SparseMatrix(rows.n_rows, rows.n_cols, rows.indptr, rows.indices,
                        rows.data * scale).csr


def cosine_matrix(rows: SparseMatrix) -> np.ndarray:
    """Dense pairwise cosine similarities between the rows."""
    u = _unit_rows(rows)
    return np.clip((u @ u.T).toarray(), -1.0, 1.0)


def mean_cosine(rows: SparseMatrix, a, b) -> float:
    """Mean cosine similarity over pairs drawn from index sets ``a`` and ``b``.

    When ``a`` and ``b`` are the same set, self-pairs are excluded.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    u = _unit_rows(rows)
    sims = (u[a] @ u[b].T).toarray()
    if np.array_equal(a, b):
        k = a.size
        if k < 2:
            raise ValueError("need two members for within-group similarity")
        return float((sims.sum() - np.trace(sims)) / (k * (k - 1)))
    return float(sims.mean())


def silhouette_values(rows: SparseMatrix, groups) -> np.ndarray:
    """Two-group silhouette with cosine distance, one value per row (input order).

    ``a_i`` is the mean distance to the rest of the row's own group and
    ``b_i`` the mean distance to the other group; the value is
    ``(b_i - a_i) / max(a_i, b_i)``.  Use :func:`silhouette_chart` for the
    grouped, sorted layout.
    """
    g = np.asarray(groups).ravel()
    if g.size != rows.n_rows:
        raise DimensionMismatch(f"{g.size} group labels for {rows.n_rows} rows")
    if not np.isin(g, (0, 1)).all():
        raise ValueError("groups must be 0/1")
    sizes = np.array([(g == 0).sum(), (g == 1).sum()])
    if sizes.min() < 2:
        raise ValueError(f"each group needs >= 2 members, got {sizes.tolist()}")
    dist = 1.0 - cosine_matrix(rows)
    np.fill_diagonal(dist, 0.0)
    to_one = dist[:, g == 1].sum(axis=1)
    to_zero = dist[:, g == 0].sum(axis=1)
    own_sum = np.where(g == 1, to_one, to_zero)
    other_sum = np.where(g == 1, to_zero, to_one)
    a = own_sum / (sizes[g] - 1)
    b = other_sum / sizes[1 - g]
    den = np.maximum(a, b)
    out = np.zeros(g.size)
    np.divide(b - a, den, out=out, where=den > 0)
    return np.clip(out, -1.0, 1.0)


def silhouette_chart(values, groups) -> list[tuple[int, float]]:
    """(group, value) pairs, group 1 first, descending within each group."""
    values = np.asarray(values)
    groups = np.asarray(groups)
    out = []
    for grp in (1, 0):
        out.extend((grp, float(v)) for v in sorted(values[groups == grp], reverse=True))
    return out
