"""Objective for the hyperplane search.

Given signed distances ``d`` of every individual from a candidate
hyperplane, the top ``delta`` percentile is treated as the predicted cohort
and scored two ways: how well its per-property counts rank-correlate with
``pi`` (the correlation term) and what fraction of disclosed positives it
contains (the recall term).  The two are combined with a harmonic mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SparseMatrix
from .errors import DimensionMismatch, NoKnownPositives
from .stats import harmonic_mean, nearest_rank, rankdata


@dataclass(frozen=True)
class ObjectiveValue:
    corr: float
    recall: float
    combined: float


def _states_of(P: SparseMatrix) -> np.ndarray:
    nz = P.data != 0
    states = np.full(P.n_rows, -1, dtype=np.int64)
    states[P.row_ids[nz]] = P.indices[nz]
    if np.any(states < 0) or np.count_nonzero(nz) != P.n_rows:
        raise DimensionMismatch("property matrix must be one-hot")
    return states


class Objective:
    """Precomputed evaluator for one (pi, P, y, delta) problem.

    Both the optimizer and the functional helpers below go through
    :meth:`evaluate`, so the hot loop and the audit path agree exactly.
    """

    def __init__(self, pi, P: SparseMatrix, y, delta: float,
                 combine: Callable[[float, float], float] = harmonic_mean):
        pi = np.asarray(pi, dtype=np.float64).ravel()
        y = np.asarray(y).ravel()
        if P.n_cols != pi.size:
            raise DimensionMismatch(f"P has {P.n_cols} columns but |pi| = {pi.size}")
        if P.n_rows != y.size:
            raise DimensionMismatch(f"P has {P.n_rows} rows but |y| = {y.size}")
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {delta}")
        self.n = y.size
        self.t = pi.size
        self.delta = float(delta)
        self.states = _states_of(P)
        self.positive = y == 1
        self.n_pos = int(self.positive.sum())
        self.k = nearest_rank(self.delta, self.n) - 1
        pr = rankdata(pi)
        self._pi_centered = pr - pr.mean()
        self._pi_ss = float(self._pi_centered @ self._pi_centered)
        self.combine = combine

    def _check(self, d):
        d = np.asarray(d, dtype=np.float64).ravel()
        if d.size != self.n:
            raise DimensionMismatch(f"|d| = {d.size} but the population has {self.n} rows")
        return d

    def selected(self, d) -> np.ndarray:
        d = self._check(d)
        thr = np.partition(d, self.k)[self.k]
        return d >= thr

    def corr_from_mask(self, mask) -> float:
        counts = np.bincount(self.states[mask], minlength=self.t)
        cr = rankdata(counts)
        cr -= cr.mean()
        den = self._pi_ss * float(cr @ cr)
        if den == 0.0:
            return 0.0
        rho = float(cr @ self._pi_centered) / float(np.sqrt(den))
        return min(1.0, max(0.0, rho))

    def recall_from_mask(self, mask) -> float:
        if self.n_pos == 0:
            raise NoKnownPositives("no disclosed positives in y")
        return int(np.count_nonzero(mask & self.positive)) / self.n_pos

    def evaluate(self, d) -> ObjectiveValue:
        mask = self.selected(d)
        corr = self.corr_from_mask(mask)
        recall = self.recall_from_mask(mask)
        return ObjectiveValue(corr, recall, float(self.combine(corr, recall)))


def corr_term(pi, P: SparseMatrix, d, delta: float) -> float:
    """Spearman correlation (clamped to [0, 1]) between ``pi`` and the
    per-property counts of the rows selected by the ``delta`` percentile of ``d``."""
    d = np.asarray(d, dtype=np.float64).ravel()
    obj = Objective(pi, P, np.zeros(P.n_rows), delta)
    return obj.corr_from_mask(obj.selected(d))


def recall_term(y, d, delta: float) -> float:
    y = np.asarray(y).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    if y.size != d.size:
        raise DimensionMismatch(f"|y| = {y.size} but |d| = {d.size}")
    if not np.any(y == 1):
        raise NoKnownPositives("no disclosed positives in y")
    k = nearest_rank(delta, d.size) - 1
    mask = d >= np.partition(d, k)[k]
    return int(np.count_nonzero(mask & (y == 1))) / int(np.count_nonzero(y == 1))


def evaluate(pi, P: SparseMatrix, y, d, delta: float) -> ObjectiveValue:
    return Objective(pi, P, y, delta).evaluate(d)

