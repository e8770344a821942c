"""Domain types and the plain-text dataset format.

A dataset on disk is a manifest of ``key = value`` lines pointing at one
matrix or vector file per component::

    features = X.tsv
    labels = y.tsv
    properties = P.tsv
    pi = pi.tsv
    prefeatures = Z.tsv      # optional
    truelabels = ytrue.tsv   # optional

Matrix files start with ``n_rows<TAB>n_cols`` followed by one
``row<TAB>col<TAB>value`` triplet per line.  Vector files start with the
length followed by ``index<TAB>value`` lines; omitted indices are 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .errors import (
    DatasetError,
    DimensionMismatch,
    DuplicateCoordinate,
    MalformedLine,
    MissingFile,
    NonOneHotProperty,
)

MANIFEST_NAME = "manifest.txt"
_REQUIRED_KEYS = ("features", "labels", "properties", "pi")
_OPTIONAL_KEYS = ("prefeatures", "truelabels")


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Row-major sparse matrix in canonical (row, col) order.

    Stored as CSR arrays; build instances with :meth:`from_triplets` (which
    validates) rather than the raw constructor.
    """

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_triplets(cls, n_rows, n_cols, rows, cols, values, *, path=None, lines=None):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise DimensionMismatch("triplet arrays differ in length", path)
        if n_rows < 0 or n_cols < 0:
            raise DimensionMismatch(f"negative shape ({n_rows}, {n_cols})", path)

        def _line(k):
            return None if lines is None else int(lines[k])

        bad = np.flatnonzero((rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols))
        if bad.size:
            k = bad[0]
            raise DimensionMismatch(
                f"coordinate ({rows[k]}, {cols[k]}) outside shape ({n_rows}, {n_cols})",
                path, _line(k))
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise MalformedLine(f"non-finite value {values[bad[0]]}", path, _line(bad[0]))

        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        dup = np.flatnonzero((rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1]))
        if dup.size:
            k = dup[0] + 1
            raise DuplicateCoordinate(
                f"duplicate coordinate ({rows[k]}, {cols[k]})",
                path, None if lines is None else int(lines[order[k]]))

        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(int(n_rows), int(n_cols), indptr, cols, values)

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        r, c = np.nonzero(a)
        return cls.from_triplets(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        coo = sp.coo_array(m)
        coo.sum_duplicates()
        return cls.from_triplets(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    @cached_property
    def csr(self) -> sp.csr_array:
        return sp.csr_array((self.data, self.indices, self.indptr), shape=self.shape)

    @cached_property
    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for r, c, v in zip(self.row_ids.tolist(), self.indices.tolist(), self.data.tolist()):
            yield r, c, v

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def dot(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n_cols:
            raise DimensionMismatch(f"vector of length {v.shape[0]} vs {self.n_cols} columns")
        return self.csr @ v

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def take_rows(self, idx) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.csr[np.asarray(idx, dtype=np.int64)])

    def hstack(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.n_rows != self.n_rows:
            raise DimensionMismatch(f"cannot stack {self.n_rows} rows with {other.n_rows}")
        return SparseMatrix.from_scipy(sp.hstack([self.csr, other.csr]))

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.bincount(self.row_ids, weights=self.data ** 2, minlength=self.n_rows))

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.data, other.data))

    __hash__ = None


def _labels(v, name):
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector")
    if v.size and not np.isin(v, (0, 1)).all():
        raise DatasetError(f"{name} must contain only 0/1 values")
    return v.astype(np.int8)


@dataclass(frozen=True, eq=False)
class CohortDataset:
    """A population: features ``X``, disclosed labels ``y``, one-hot
    properties ``P`` and per-property statistic ``pi``.

    ``Z`` (pre-event features) and ``y_true`` (ground truth, synthetic data
    only) are optional.
    """

    X: SparseMatrix
    y: np.ndarray
    P: SparseMatrix
    pi: np.ndarray
    Z: Optional[SparseMatrix] = None
    y_true: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "y", _labels(self.y, "y"))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=np.float64).ravel())
        n = self.X.n_rows
        if self.P.n_rows != n or self.y.size != n:
            raise DimensionMismatch(
                f"row counts disagree: X={n}, P={self.P.n_rows}, y={self.y.size}")
        if self.Z is not None and self.Z.n_rows != n:
            raise DimensionMismatch(f"Z has {self.Z.n_rows} rows, expected {n}")
        if self.pi.size != self.P.n_cols:
            raise DimensionMismatch(f"|pi| = {self.pi.size} but P has {self.P.n_cols} columns")
        if not np.all(np.isfinite(self.pi)) or np.any(self.pi < 0):
            raise DatasetError("pi must be finite and non-negative")
        per_row = np.bincount(self.P.row_ids[self.P.data != 0], minlength=n)
        bad = np.flatnonzero((per_row != 1))
        if bad.size:
            raise NonOneHotProperty(int(bad[0]))
        ones = self.P.data[self.P.data != 0]
        if np.any(ones != 1.0):
            r = self.P.row_ids[self.P.data != 0][np.flatnonzero(ones != 1.0)[0]]
            raise NonOneHotProperty(int(r))
        if self.y_true is not None:
            yt = _labels(self.y_true, "y_true")
            if yt.size != n:
                raise DimensionMismatch(f"y_true has length {yt.size}, expected {n}")
            if np.any((self.y == 1) & (yt == 0)):
                raise DatasetError("disclosed positive is not a true positive")
            object.__setattr__(self, "y_true", yt)

    @property
    def n(self) -> int:
        return self.X.n_rows

    @property
    def t(self) -> int:
        return self.P.n_cols

    @cached_property
    def states(self) -> np.ndarray:
        """Property (column) index of each row."""
        nz = self.P.data != 0
        out = np.empty(self.n, dtype=np.int64)
        out[self.P.row_ids[nz]] = self.P.indices[nz]
        return out

    @cached_property
    def state_sizes(self) -> np.ndarray:
        return np.bincount(self.states, minlength=self.t)

    def subset(self, rows) -> "CohortDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return CohortDataset(
            X=self.X.take_rows(rows),
            y=self.y[rows],
            P=self.P.take_rows(rows),
            pi=self.pi,
            Z=None if self.Z is None else self.Z.take_rows(rows),
            y_true=None if self.y_true is None else self.y_true[rows],
        )

    def with_labels(self, y) -> "CohortDataset":
        return replace(self, y=y)

    def equals(self, other: "CohortDataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            if isinstance(a, SparseMatrix):
                return a == b
            return a.shape == b.shape and np.array_equal(a, b)
        return (same(self.X, other.X) and same(self.y, other.y) and same(self.P, other.P)
                and same(self.pi, other.pi) and same(self.Z, other.Z)
                and same(self.y_true, other.y_true))


def one_hot(states, t: int) -> SparseMatrix:
    states = np.asarray(states, dtype=np.int64)
    return SparseMatrix.from_triplets(states.size, t, np.arange(states.size), states,
                                      np.ones(states.size))


@dataclass(frozen=True, eq=False)
class HyperplaneModel:
    """Unit-norm hyperplane learned by :func:`cohortsgd.sgd.train`."""

    w: np.ndarray
    delta: float
    eta: int
    seed: int
    objective_final: float

    @property
    def m(self) -> int:
        return int(self.w.size)


# -- text I/O ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix(path, m: SparseMatrix) -> None:
    with open(path, "w") as fh:
        fh.write(f"{m.n_rows}\t{m.n_cols}\n")
        for r, c, v in m.entries():
            fh.write(f"{r}\t{c}\t{_fmt(v)}\n")


def write_vector(path, v, integer=False) -> None:
    v = np.asarray(v)
    with open(path, "w") as fh:
        fh.write(f"{v.size}\n")
        for i, x in enumerate(v.tolist()):
            if integer:
                if x:
                    fh.write(f"{i}\t{int(x)}\n")
            else:
                fh.write(f"{i}\t{_fmt(x)}\n")


def _open(path):
    try:
        return open(path)
    except FileNotFoundError:
        raise MissingFile("file not found", path) from None


def _data_lines(fh):
    for lineno, raw in enumerate(fh, start=1):
        s = raw.strip()
        if s and not s.startswith("#"):
            yield lineno, s


def read_matrix(path) -> SparseMatrix:
    with _open(path) as fh:
        lines = _data_lines(fh)
        try:
            lineno, header = next(lines)
        except StopIteration:
            raise MalformedLine("missing header", path) from None
        parts = header.split("\t")
        try:
            n_rows, n_cols = (int(x) for x in parts)
        except ValueError:
            raise MalformedLine(f"bad matrix header {header!r}", path, lineno) from None
        rows, cols, vals, where = [], [], [], []
        for lineno, s in lines:
            parts = s.split("\t")
            try:
                r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
                if len(parts) != 3:
                    raise ValueError
            except (ValueError, IndexError):
                raise MalformedLine(f"expected row<TAB>col<TAB>value, got {s!r}",
                                    path, lineno) from None
            rows.append(r)
            cols.append(c)
            vals.append(v)
            where.append(lineno)
    return SparseMatrix.from_triplets(n_rows, n_cols, rows, cols, vals, path=path, lines=where)


def read_vector(path, integer=False) -> np.ndarray:
    with _open(path) as fh:
        lines = _data_lines(fh)
        try:
            lineno, header = next(lines)
            length = int(header)
        except StopIteration:
            raise MalformedLine("missing header", path) from None
        except ValueError:
            raise MalformedLine(f"bad vector header {header!r}", path, lineno) from None
        out = np.zeros(length, dtype=np.int8 if integer else np.float64)
        seen = set()
        for lineno, s in lines:
            parts = s.split("\t")
            try:
                if len(parts) != 2:
                    raise ValueError
                i = int(parts[0])
                v = float(parts[1])
            except ValueError:
                raise MalformedLine(f"expected index<TAB>value, got {s!r}", path, lineno) from None
            if not 0 <= i < length:
                raise DimensionMismatch(f"index {i} outside length {length}", path, lineno)
            if i in seen:
                raise DuplicateCoordinate(f"duplicate index {i}", path, lineno)
            if not math.isfinite(v) or (integer and v not in (0.0, 1.0)):
                raise MalformedLine(f"invalid value {parts[1]!r}", path, lineno)
            seen.add(i)
            out[i] = v
    return out


def _read_manifest(path) -> dict[str, Path]:
    base = Path(path).parent
    entries = {}
    with _open(path) as fh:
        for lineno, s in _data_lines(fh):
            key, sep, value = (x.strip() for x in s.partition("="))
            if not sep or not value:
                raise MalformedLine(f"expected key = value, got {s!r}", path, lineno)
            if key not in _REQUIRED_KEYS + _OPTIONAL_KEYS:
                raise MalformedLine(f"unknown manifest key {key!r}", path, lineno)
            entries[key] = base / value
    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise MalformedLine(f"manifest lacks required key {key!r}", path)
    return entries


def load_dataset(manifest_path) -> CohortDataset:
    files = _read_manifest(manifest_path)
    X = read_matrix(files["features"])
    P = read_matrix(files["properties"])
    y = read_vector(files["labels"], integer=True)
    pi = read_vector(files["pi"])
    Z = read_matrix(files["prefeatures"]) if "prefeatures" in files else None
    y_true = read_vector(files["truelabels"], integer=True) if "truelabels" in files else None
    try:
        return CohortDataset(X=X, y=y, P=P, pi=pi, Z=Z, y_true=y_true)
    except DatasetError as exc:
        if exc.path is None:
            exc.path = manifest_path
            exc.args = (f"{manifest_path}: {exc.args[0]}",)
        raise


def save_dataset(ds: CohortDataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = {"features": "X.tsv", "labels": "y.tsv", "properties": "P.tsv", "pi": "pi.tsv"}
    write_matrix(directory / names["features"], ds.X)
    write_vector(directory / names["labels"], ds.y, integer=True)
    write_matrix(directory / names["properties"], ds.P)
    write_vector(directory / names["pi"], ds.pi)
    if ds.Z is not None:
        names["prefeatures"] = "Z.tsv"
        write_matrix(directory / "Z.tsv", ds.Z)
    if ds.y_true is not None:
        names["truelabels"] = "ytrue.tsv"
        write_vector(directory / "ytrue.tsv", ds.y_true, integer=True)
    manifest = directory / MANIFEST_NAME
    with open(manifest, "w") as fh:
        for key, name in names.items():
            fh.write(f"{key} = {name}\n")
    return manifest


def save_model(model: HyperplaneModel, path) -> None:
    """Header ``m, delta, eta, seed, objective_final`` then nonzero weights."""
    with open(path, "w") as fh:
        fh.write(f"{model.m}\t{_fmt(model.delta)}\t{model.eta}\t{model.seed}\t"
                 f"{_fmt(model.objective_final)}\n")
        for j in np.flatnonzero(model.w).tolist():
            fh.write(f"{j}\t{_fmt(model.w[j])}\n")


def load_model(path) -> HyperplaneModel:
    with _open(path) as fh:
        lines = _data_lines(fh)
        try:
            lineno, header = next(lines)
        except StopIteration:
            raise MalformedLine("missing header", path) from None
        try:
            m, delta, eta, seed, obj = header.split("\t")
            m, delta, eta, seed, obj = int(m), float(delta), int(eta), int(seed), float(obj)
        except ValueError:
            raise MalformedLine(f"bad model header {header!r}", path, lineno) from None
        w = np.zeros(m)
        for lineno, s in lines:
            try:
                j, v = s.split("\t")
                w[int(j)] = float(v)
            except (ValueError, IndexError):
                raise MalformedLine(f"bad weight line {s!r}", path, lineno) from None
    return HyperplaneModel(w=w, delta=delta, eta=eta, seed=seed, objective_final=obj)
