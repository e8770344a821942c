"""Comparison learners trained on disclosed labels only, and the
feature transform that appends the population statistic as a column."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .core import SparseMatrix, _data_lines, _fmt, _open
from .errors import DimensionMismatch, MalformedLine, SingleClass


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Weights over the features with the bias stored last."""

    weights: np.ndarray
    kind: str  # "perceptron" or "logistic"

    @property
    def coef(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def bias(self) -> float:
        return float(self.weights[-1])

    def decision_function(self, X: SparseMatrix) -> np.ndarray:
        if X.n_cols != self.coef.size:
            raise DimensionMismatch(f"X has {X.n_cols} columns, model expects {self.coef.size}")
        return X.dot(self.coef) + self.bias

    def predict_proba(self, X: SparseMatrix) -> np.ndarray:
        return expit(self.decision_function(X))


def _check_binary(X: SparseMatrix, y):
    y = np.asarray(y).ravel()
    if y.size != X.n_rows:
        raise DimensionMismatch(f"{y.size} labels for {X.n_rows} rows")
    if np.all(y == 1) or not np.any(y == 1):
        raise SingleClass("both classes are required")
    return y


def train_perceptron(X: SparseMatrix, y, epochs: int = 5, seed: int = 0) -> LinearClassifier:
    """Classical perceptron: on a mistake, ``w += y' x`` and ``b += y'`` with y' in {-1, +1}."""
    y = _check_binary(X, y)
    sign = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(X.n_cols)
    b = 0.0
    rng = np.random.default_rng(seed)
    indptr, indices, data = X.indptr, X.indices, X.data
    for _ in range(epochs):
        for i in rng.permutation(X.n_rows).tolist():
            lo, hi = indptr[i], indptr[i + 1]
            cols, vals = indices[lo:hi], data[lo:hi]
            if sign[i] * (w[cols] @ vals + b) <= 0:
                w[cols] += sign[i] * vals
                b += sign[i]
    return LinearClassifier(np.append(w, b), "perceptron")


def train_logistic(X: SparseMatrix, y, class_weights=(1.0, 1.0), l2: float = 0.0,
                   epochs: int = 20, seed: int = 0, learning_rate: float = 0.05) -> LinearClassifier:
    """Per-sample SGD on class-weighted, L2-regularized logistic loss.

    ``class_weights`` is ``(w_pos, w_neg)``.  The L2 penalty is applied as a
    proximal shrink of the coefficients (never the bias) after every step,
    which stays stable for arbitrarily large ``l2``.
    """
    y = _check_binary(X, y)
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    w_pos, w_neg = (float(c) for c in class_weights)
    sample_w = np.where(y == 1, w_pos, w_neg)
    target = (y == 1).astype(np.float64)
    w = np.zeros(X.n_cols)
    b = 0.0
    rng = np.random.default_rng(seed)
    indptr, indices, data = X.indptr, X.indices, X.data
    for epoch in range(epochs):
        lr = learning_rate / np.sqrt(1.0 + epoch)
        shrink = 1.0 / (1.0 + lr * l2)
        for i in rng.permutation(X.n_rows).tolist():
            lo, hi = indptr[i], indptr[i + 1]
            cols, vals = indices[lo:hi], data[lo:hi]
            z = float(w[cols] @ vals) + b
            g = sample_w[i] * (expit(z) - target[i])
            w[cols] -= lr * g * vals
            b -= lr * g
            if l2:
                w *= shrink
    return LinearClassifier(np.append(w, b), "logistic")


def augment_with_pi(X: SparseMatrix, P: SparseMatrix, pi) -> SparseMatrix:
    """``[X | P pi]``: one extra column holding each row's property statistic."""
    pi = np.asarray(pi, dtype=np.float64).ravel()
    if P.n_rows != X.n_rows:
        raise DimensionMismatch(f"X has {X.n_rows} rows but P has {P.n_rows}")
    if P.n_cols != pi.size:
        raise DimensionMismatch(f"P has {P.n_cols} columns but |pi| = {pi.size}")
    extra = sp.csr_array((P.csr @ pi).reshape(-1, 1))
    return SparseMatrix.from_scipy(sp.hstack([X.csr, extra]))


def save_classifier(model: LinearClassifier, path) -> None:
    """Header ``n_weights<TAB>kind`` then ``index<TAB>weight`` for nonzero weights."""
    with open(path, "w") as fh:
        fh.write(f"{model.weights.size}\t{model.kind}\n")
        for j in np.flatnonzero(model.weights).tolist():
            fh.write(f"{j}\t{_fmt(model.weights[j])}\n")


def load_classifier(path) -> LinearClassifier:
    with _open(path) as fh:
        lines = _data_lines(fh)
        try:
            lineno, header = next(lines)
            size, kind = header.split("\t")
            w = np.zeros(int(size))
        except (StopIteration, ValueError):
            raise MalformedLine("bad classifier header", path) from None
        if kind not in ("perceptron", "logistic"):
            raise MalformedLine(f"unknown kind {kind!r}", path, lineno)
        for lineno, s in lines:
            try:
                j, v = s.split("\t")
                w[int(j)] = float(v)
            except (ValueError, IndexError):
                raise MalformedLine(f"bad weight line {s!r}", path, lineno) from None
    return LinearClassifier(w, kind)
