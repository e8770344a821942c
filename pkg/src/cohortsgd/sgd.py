"""Perceptron-style search for a hyperplane that maximizes the cohort
objective, plus scoring and run-to-run stability analysis."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CohortDataset, HyperplaneModel, SparseMatrix
from .errors import DimensionMismatch, NoKnownPositives
from .objective import Objective, ObjectiveValue
from .stats import percentile_select, softmax_normalize, spearman_rho

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    eta: int = 30_000
    delta: float = 0.9
    seed: int = 0
    snapshot_every: Optional[int] = None

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass
class TrainTrace:
    accepted_steps: list[tuple[int, float]] = field(default_factory=list)
    final: Optional[ObjectiveValue] = None
    snapshots: list[tuple[int, float]] = field(default_factory=list)


def init_hyperplane(m: int, seed: int) -> np.ndarray:
    """Seeded random direction on the unit sphere in ``m`` dimensions."""
    if m < 1:
        raise ValueError("need at least one feature")
    v = np.random.default_rng(seed).standard_normal(m)
    return v / np.linalg.norm(v)


def _sample_stream(seed: int, eta: int, n: int) -> np.ndarray:
    # Independent of the stream used by init_hyperplane.
    return np.random.default_rng([seed, 1]).integers(0, n, size=eta)


def train(ds: CohortDataset, cfg: TrainConfig, X: Optional[SparseMatrix] = None):
    """Fit a hyperplane to ``ds`` and return ``(model, likelihoods, trace)``.

    Each iteration samples one row ``x`` uniformly (with replacement) and
    considers the two candidates ``(w + x)/|w + x|`` and ``(w - x)/|w - x|``.
    The first replaces ``w`` when it beats both the second and the best
    objective so far; otherwise the second does if it beats the best.  A
    candidate with zero norm is skipped.

    Distances are maintained incrementally: ``X (w +- x) = d +- X x``, so an
    iteration costs one sparse product plus two O(n) objective evaluations.
    ``X`` overrides ``ds.X`` (e.g. combined post- and pre-event features).
    """
    X = ds.X if X is None else X
    if X.n_rows != ds.n:
        raise DimensionMismatch(f"feature matrix has {X.n_rows} rows, dataset has {ds.n}")
    if not np.any(ds.y == 1):
        raise NoKnownPositives("training needs at least one disclosed positive")
    objective = Objective(ds.pi, ds.P, ds.y, cfg.delta)
    csr = X.csr

    w = init_hyperplane(X.n_cols, cfg.seed)
    d = csr @ w
    best = 0.0
    trace = TrainTrace()
    samples = _sample_stream(cfg.seed, cfg.eta, ds.n)
    x = np.zeros(X.n_cols)

    for it, i in enumerate(samples.tolist(), start=1):
        cols, vals = X.row(i)
        if cols.size:
            x[cols] = vals
            xd = csr @ x
            wx = float(w[cols] @ vals)
            xx = float(vals @ vals)
            o_plus = o_minus = -np.inf
            n_plus = np.sqrt(max(1.0 + 2.0 * wx + xx, 0.0))
            n_minus = np.sqrt(max(1.0 - 2.0 * wx + xx, 0.0))
            if n_plus > 0:
                o_plus = objective.evaluate((d + xd) / n_plus).combined
            if n_minus > 0:
                o_minus = objective.evaluate((d - xd) / n_minus).combined
            sign = 0
            if o_plus > o_minus and o_plus > best:
                sign = 1
            elif o_minus > best:
                sign = -1
            if sign:
                w = w.copy()
                w[cols] += sign * vals
                w /= np.linalg.norm(w)
                # Resynchronize so the recorded objective is exactly that of w.
                d = csr @ w
                best = objective.evaluate(d).combined
                trace.accepted_steps.append((it, best))
            x[cols] = 0.0
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            trace.snapshots.append((it, best))

    trace.final = objective.evaluate(d)
    log.debug("train: %d accepted steps, final %.4f", len(trace.accepted_steps),
              trace.final.combined)
    model = HyperplaneModel(w=w, delta=cfg.delta, eta=cfg.eta, seed=cfg.seed,
                            objective_final=trace.final.combined)
    return model, softmax_normalize(d), trace


def score(model: HyperplaneModel, X: SparseMatrix) -> np.ndarray:
    if X.n_cols != model.w.size:
        raise DimensionMismatch(f"X has {X.n_cols} columns, model has {model.w.size} weights")
    return softmax_normalize(X.dot(model.w))


def top_features(model: HyperplaneModel, k: int,
                 feature_names: Optional[Sequence[str]] = None) -> list[tuple]:
    """The ``k`` largest weights, ties broken by ascending feature index."""
    if k > model.w.size:
        raise ValueError(f"k = {k} exceeds the {model.w.size} features")
    order = np.lexsort((np.arange(model.w.size), -model.w))[:k]
    names = feature_names if feature_names is not None else range(model.w.size)
    return [(names[j], float(model.w[j])) for j in order.tolist()]


@dataclass
class StabilityReport:
    pairwise_rho: np.ndarray
    agreement: float
    seeds: list[int]

    @property
    def min_rho(self) -> float:
        iu = np.triu_indices(len(self.seeds), k=1)
        return float(self.pairwise_rho[iu].min())


def jaccard(a, b) -> float:
    a, b = set(np.asarray(a).tolist()), set(np.asarray(b).tolist())
    union = len(a | b)
    return len(a & b) / union if union else 1.0


def stability_report(ds: CohortDataset, cfg: TrainConfig, n_runs: int,
                     seeds: Optional[Sequence[int]] = None) -> StabilityReport:
    """Train ``n_runs`` times (seeds ``cfg.seed``, ``cfg.seed + 1``, ...).

    Agreement is the mean Jaccard index between the runs' top-``delta``
    percentile sets over all unordered run pairs.
    """
    if n_runs < 2:
        raise ValueError("stability needs at least two runs")
    seeds = list(seeds) if seeds is not None else [cfg.seed + r for r in range(n_runs)]
    if len(seeds) != n_runs:
        raise ValueError("one seed per run")
    likelihoods = []
    for s in seeds:
        _, l, _ = train(ds, TrainConfig(eta=cfg.eta, delta=cfg.delta, seed=s))
        likelihoods.append(l)
    tops = [percentile_select(l, cfg.delta).indices for l in likelihoods]
    rho = np.eye(n_runs)
    agreements = []
    for i, j in itertools.combinations(range(n_runs), 2):
        rho[i, j] = rho[j, i] = spearman_rho(likelihoods[i], likelihoods[j])
        agreements.append(jaccard(tops[i], tops[j]))
    return StabilityReport(rho, float(np.mean(agreements)), seeds)
