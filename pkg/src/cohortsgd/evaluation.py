"""Validation protocols: label hiding, stratified folds, ROC and
probabilistic ROC, the Wilcoxon signed-rank test, and the experiment
pipelines built on them."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .baselines import LinearClassifier, augment_with_pi, train_logistic, train_perceptron
from .core import CohortDataset, SparseMatrix
from .errors import (DatasetError, DegenerateLikelihood, DimensionMismatch, EmptyInput,
                     NoKnownPositives, SingleClass, TooFewPairs, ZeroVariance)
from .sgd import TrainConfig, score, train
from .stats import mean_cosine, percentile_select, rankdata, silhouette_values, spearman


@dataclass(frozen=True)
class RocCurve:
    points: np.ndarray  # (k, 2) array of (fpr, tpr)
    auc: float


@dataclass(frozen=True)
class ProcCurve:
    points: np.ndarray  # (k, 2) array of (pfpr, ptpr)
    pauc: float
    optimal_pauc: float


@dataclass(frozen=True)
class HideResult:
    y_hidden: np.ndarray
    hidden_indices: np.ndarray
    gamma: float


def trapezoid(points) -> float:
    x, y = points[:, 0], points[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def _sweep(scores, pos_w, neg_w) -> np.ndarray:
    """Curve points from a descending-score sweep; equal scores form one step."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    last_of_group = np.flatnonzero(np.concatenate((s[1:] != s[:-1], [True])))
    tp = np.cumsum(pos_w[order])[last_of_group] / pos_w.sum()
    fp = np.cumsum(neg_w[order])[last_of_group] / neg_w.sum()
    return np.vstack(([0.0, 0.0], np.column_stack((fp, tp))))


def roc_auc(scores, truth) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel()
    if scores.size != truth.size:
        raise DimensionMismatch(f"{scores.size} scores for {truth.size} labels")
    pos = (truth == 1).astype(np.float64)
    if pos.sum() == 0 or pos.sum() == pos.size:
        raise SingleClass("ROC needs both classes in the ground truth")
    pts = _sweep(scores, pos, 1.0 - pos)
    return RocCurve(pts, trapezoid(pts))


def proc_curve(c, l) -> ProcCurve:
    """Probabilistic ROC of classifier scores ``c`` against likelihoods ``l``.

    Each individual counts as ``l_i`` of a positive and ``1 - l_i`` of a
    negative.  Equal scores are swept as one step, as in :func:`roc_auc`, so
    binary likelihoods reproduce the ordinary ROC curve exactly.
    """
    c = np.asarray(c, dtype=np.float64).ravel()
    l = np.asarray(l, dtype=np.float64).ravel()
    if c.size != l.size:
        raise DimensionMismatch(f"{c.size} scores for {l.size} likelihoods")
    if l.sum() == 0 or (1.0 - l).sum() == 0:
        raise DegenerateLikelihood("likelihoods are all 0 or all 1")
    pts = _sweep(c, l, 1.0 - l)
    opt = _sweep(l, l, 1.0 - l)
    return ProcCurve(pts, trapezoid(pts), trapezoid(opt))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def hide_labels(y, gamma: float, seed: int) -> HideResult:
    """Zero a uniformly chosen ``round(gamma * #positives)`` of the positives."""
    y = np.asarray(y).ravel()
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    positives = np.flatnonzero(y == 1)
    if positives.size == 0:
        raise NoKnownPositives("cannot hide labels without positives")
    k = _round_half_up(gamma * positives.size)
    hidden = np.sort(np.random.default_rng(seed).choice(positives, size=k, replace=False))
    out = y.astype(np.int8).copy()
    out[hidden] = 0
    return HideResult(out, hidden, float(gamma))


def stratified_kfold(y, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified folds; per-fold counts of every class differ by <= 1.

    ``y`` may hold any discrete labels, not only 0/1.
    """
    y = np.asarray(y).ravel()
    if k < 2:
        raise ValueError("need at least two folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < k:
            raise ValueError(f"class {cls} has {members.size} members, fewer than k = {k}")
        members = rng.permutation(members)
        fold_of[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    folds = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, test))
    return folds


class WilcoxonResult(NamedTuple):
    statistic: float  # sum of ranks of positive differences
    p_value: float


def _exact_signed_rank_tail(doubled_ranks, t2):
    """P(T <= t2) and P(T >= t2) under random signs; ranks are doubled to integers."""
    total = int(doubled_ranks.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:total + 1 - r]
        dist = dist + shifted
    dist /= dist.sum()
    return float(dist[:t2 + 1].sum()), float(dist[t2:].sum())


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided signed-rank test on paired samples.

    Zero differences are dropped.  The null distribution is exact (ties
    included) for up to 20 pairs and normal with continuity and tie
    corrections above.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DimensionMismatch(f"{a.size} vs {b.size} paired values")
    diff = a - b
    diff = diff[diff != 0]
    n = diff.size
    if n < 5:
        raise TooFewPairs(f"{n} non-zero differences; need at least 5")
    ranks = rankdata(np.abs(diff))
    t_plus = float(ranks[diff > 0].sum())
    if n <= 20:
        doubled = np.rint(2 * ranks).astype(np.int64)
        lo, hi = _exact_signed_rank_tail(doubled, int(round(2 * t_plus)))
        p = min(1.0, 2.0 * min(lo, hi))
    else:
        mean = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts ** 3 - counts)) / 48.0
        z = max(abs(t_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(t_plus, p)


# -- reports ----------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Named tables (curves) plus scalar summaries, serialized as TSV blocks."""

    name: str
    params: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)  # name -> (columns, rows)
    summary: dict = field(default_factory=dict)

    def add_curve(self, name, columns, rows):
        self.curves[name] = (list(columns), [list(r) for r in rows])

    def to_tsv(self) -> str:
        out = [f"# report\t{self.name}"]
        for key in sorted(self.params):
            out.append(f"# param\t{key}\t{_cell(self.params[key])}")
        for name, (columns, rows) in self.curves.items():
            out.append("")
            out.append(f"## curve\t{name}")
            out.append("\t".join(columns))
            out.extend("\t".join(_cell(v) for v in row) for row in rows)
        out.append("")
        out.append("## summary")
        out.extend(f"{k}\t{_cell(v)}" for k, v in self.summary.items())
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_tsv())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_cell(x) for x in v)
    return str(v)


def read_report(path) -> dict:
    """Parse a report file into ``{"curves": {name: [dict rows]}, "summary": {...}}``."""
    curves, summary, params = {}, {}, {}
    block, columns = None, None
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "# param":
                params[parts[1]] = parts[2]
            elif parts[0] == "## curve":
                block, columns = parts[1], None
                curves[block] = []
            elif parts[0] == "## summary":
                block = "summary"
            elif line.startswith("#"):
                continue
            elif block == "summary":
                summary[parts[0]] = parts[1]
            elif block is not None and columns is None:
                columns = parts
            elif block is not None:
                curves[block].append(dict(zip(columns, parts)))
    return {"curves": curves, "summary": summary, "params": params}


# -- pipelines --------------------------------------------------------------

def run_tasks(fn, tasks, n_jobs: int = 1) -> list:
    """Apply ``fn`` to every task, in order; ``n_jobs > 1`` uses worker processes.

    Results come back in task order, so output never depends on ``n_jobs``.
    """
    tasks = list(tasks)
    if n_jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _train_cfg(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, snapshot_every=None, **changes)


def _eval_mask(y_true, y_hidden, rows, any_hidden: bool):
    """Held-out rows scored in the sweep: hidden positives and true negatives.

    With nothing hidden (gamma = 0) every held-out positive counts instead.
    """
    yt, yh = y_true[rows], y_hidden[rows]
    if any_hidden:
        return (yt == 0) | ((yt == 1) & (yh == 0))
    return np.ones(rows.size, dtype=bool)


BASELINES = ("perceptron", "perceptron+pi", "logistic", "logistic+pi")


def _sweep_fold(task):
    ds, y_hidden, train_rows, test_rows, delta, cfg, any_hidden, with_baselines = task
    train_ds = ds.subset(train_rows).with_labels(y_hidden[train_rows])
    test_ds = ds.subset(test_rows)
    mask = _eval_mask(ds.y_true, y_hidden, test_rows, any_hidden)
    truth = test_ds.y_true[mask]
    out = {}
    model, _, _ = train(train_ds, _train_cfg(cfg, delta=delta))
    scores = score(model, test_ds.X)
    out["proposed"] = (roc_auc(scores[mask], truth).auc, scores[mask], truth)
    if with_baselines:
        for name in BASELINES:
            Xtr, Xte = train_ds.X, test_ds.X
            if name.endswith("+pi"):
                Xtr = augment_with_pi(Xtr, train_ds.P, ds.pi)
                Xte = augment_with_pi(Xte, test_ds.P, ds.pi)
            if name.startswith("perceptron"):
                clf = train_perceptron(Xtr, train_ds.y, epochs=5, seed=cfg.seed)
            else:
                n_pos = int(train_ds.y.sum())
                weights = ((train_ds.n - n_pos) / n_pos, 1.0)
                clf = train_logistic(Xtr, train_ds.y, class_weights=weights, seed=cfg.seed)
            out[name] = (roc_auc(clf.decision_function(Xte)[mask], truth).auc, None, None)
    return out


def _strata(y_true, y_hidden, k):
    labels = np.where(y_true == 1, np.where(y_hidden == 1, 1, 2), 0)
    _, counts = np.unique(labels, return_counts=True)
    return labels if counts.min() >= k else y_true


def sweep_experiment(ds: CohortDataset, gammas, deltas, k: int = 5,
                     cfg: TrainConfig = TrainConfig(), n_jobs: int = 1,
                     with_baselines: bool = True) -> ExperimentReport:
    """Hide a fraction gamma of the true positives, then cross-validate the
    optimizer for each learning percentile delta.

    AUC is measured on held-out hidden positives against held-out true
    negatives.  Baselines see the same folds and labels; Wilcoxon p-values
    pair the per-fold AUCs of the proposed method with each baseline.
    """
    if ds.y_true is None:
        raise DatasetError("sweep needs ground-truth labels (y_true)")
    gammas = [float(g) for g in gammas]
    deltas = [float(d) for d in deltas]
    tasks, keys = [], []
    for gi, gamma in enumerate(gammas):
        hidden = hide_labels(ds.y_true, gamma, seed=cfg.seed * 1000 + gi)
        any_hidden = hidden.hidden_indices.size > 0
        folds = stratified_kfold(_strata(ds.y_true, hidden.y_hidden, k), k, seed=cfg.seed)
        for di, delta in enumerate(deltas):
            for f, (tr, te) in enumerate(folds):
                tasks.append((ds, hidden.y_hidden, tr, te, delta, cfg, any_hidden,
                              with_baselines and di == 0))
                keys.append((gamma, delta, f))
    results = run_tasks(_sweep_fold, tasks, n_jobs)

    # Baselines do not depend on delta; reuse the first delta's fits.
    base = {(g, f): r for (g, d, f), r in zip(keys, results) if d == deltas[0]}
    report = ExperimentReport("sweep", params={"gammas": gammas, "deltas": deltas, "folds": k,
                                                "eta": cfg.eta, "seed": cfg.seed})
    fold_rows, cell_rows, wil_rows = [], [], []
    per_cell = {}
    for (gamma, delta, f), r in zip(keys, results):
        methods = {"proposed": r["proposed"][0]}
        if with_baselines:
            methods.update({b: base[(gamma, f)][b][0] for b in BASELINES})
        for name, auc in methods.items():
            fold_rows.append([gamma, delta, f, name, auc])
            per_cell.setdefault((gamma, delta, name), []).append(auc)
    for gamma in gammas:
        for delta in deltas:
            pooled_s = np.concatenate([r["proposed"][1] for key, r in zip(keys, results)
                                       if key[:2] == (gamma, delta)])
            pooled_t = np.concatenate([r["proposed"][2] for key, r in zip(keys, results)
                                       if key[:2] == (gamma, delta)])
            roc = roc_auc(pooled_s, pooled_t)
            report.add_curve(f"roc gamma={gamma} delta={delta}", ["fpr", "tpr"], roc.points)
            for name in ("proposed",) + (BASELINES if with_baselines else ()):
                aucs = per_cell[(gamma, delta, name)]
                cell_rows.append([gamma, delta, name, float(np.mean(aucs)),
                                  float(np.std(aucs)), len(aucs)])
                if name != "proposed":
                    try:
                        p = wilcoxon_signed_rank(per_cell[(gamma, delta, "proposed")], aucs).p_value
                    except TooFewPairs:
                        p = float("nan")
                    wil_rows.append([gamma, delta, name, p])
    report.add_curve("cells", ["gamma", "delta", "method", "mean_auc", "std_auc", "n_folds"],
                     cell_rows)
    report.add_curve("folds", ["gamma", "delta", "fold", "method", "auc"], fold_rows)
    if with_baselines:
        report.add_curve("wilcoxon", ["gamma", "delta", "baseline", "p_value"], wil_rows)
    best = max((r for r in cell_rows if r[2] == "proposed"), key=lambda r: r[3])
    report.summary.update({"best_gamma": best[0], "best_delta": best[1], "best_mean_auc": best[3]})
    return report


@dataclass
class LabeledSlices:
    positives: np.ndarray
    negatives: np.ndarray
    theta: float

    @property
    def lam(self) -> float:
        return 3.0 * (1.0 - self.theta)


def slice_by_likelihood(l, theta: float) -> LabeledSlices:
    """Top-theta percentile as positives, the 3x as many lowest-likelihood rows as negatives."""
    if not 0.75 < theta < 1.0:
        raise ValueError(f"theta must lie in (0.75, 1) so that 3(1 - theta) < theta; got {theta}")
    l = np.asarray(l, dtype=np.float64)
    pos = percentile_select(l, theta).indices
    n_neg = 3 * pos.size
    neg = np.sort(np.argsort(l, kind="mergesort")[:n_neg])
    if n_neg > l.size or np.intersect1d(pos, neg).size:
        raise ValueError(f"positive and negative slices overlap at theta = {theta}")
    return LabeledSlices(pos, neg, float(theta))


def _cv_scores(features: SparseMatrix, positives, negatives, k, seed, class_weights):
    """Out-of-fold logistic scores for every row; only slice members are trained on."""
    labels = np.zeros(features.n_rows, dtype=np.int64)
    labels[positives] = 1
    labels[negatives] = 2
    scores = np.empty(features.n_rows)
    for tr, te in stratified_kfold(labels, k, seed):
        tr = tr[labels[tr] > 0]
        clf = train_logistic(features.take_rows(tr), (labels[tr] == 1).astype(np.int8),
                             class_weights=class_weights, seed=seed)
        scores[te] = clf.predict_proba(features.take_rows(te))
    rows = np.flatnonzero(labels > 0)
    final = train_logistic(features.take_rows(rows), (labels[rows] == 1).astype(np.int8),
                           class_weights=class_weights, seed=seed)
    return scores, final


@dataclass
class PrescreenResult:
    classifier: LinearClassifier
    curve: ProcCurve
    slices: LabeledSlices
    scores: np.ndarray
    likelihood: np.ndarray


def prescreen_pipeline(ds: CohortDataset, theta: float, cfg: TrainConfig = TrainConfig(),
                       k: int = 5, likelihood=None) -> PrescreenResult:
    """Train a logistic classifier on pre-event features Z from labels
    inferred by the optimizer, and score it with the probabilistic ROC.

    Scores are out-of-fold over all individuals.  ``likelihood`` skips the
    optimizer run when the caller already has it.
    """
    if ds.Z is None:
        raise DatasetError("pre-screening needs pre-event features (Z)")
    l = train(ds, _train_cfg(cfg))[1] if likelihood is None else np.asarray(likelihood)
    slices = slice_by_likelihood(l, theta)
    scores, clf = _cv_scores(ds.Z, slices.positives, slices.negatives, k, cfg.seed, (3.0, 1.0))
    return PrescreenResult(clf, proc_curve(scores, l), slices, scores, l)


def siu_baseline(ds: CohortDataset, likelihood, cfg: TrainConfig = TrainConfig(),
                 k: int = 5) -> PrescreenResult:
    """Logistic classifier on Z trained on disclosed positives against three
    times as many individuals sampled from the rest of the population."""
    if ds.Z is None:
        raise DatasetError("pre-screening needs pre-event features (Z)")
    pos = np.flatnonzero(ds.y == 1)
    if pos.size < k:
        raise ValueError(f"{pos.size} disclosed positives cannot fill {k} folds")
    rest = np.flatnonzero(ds.y == 0)
    rng = np.random.default_rng([cfg.seed, 7])
    neg = np.sort(rng.choice(rest, size=min(3 * pos.size, rest.size), replace=False))
    scores, clf = _cv_scores(ds.Z, pos, neg, k, cfg.seed, (3.0, 1.0))
    l = np.asarray(likelihood)
    return PrescreenResult(clf, proc_curve(scores, l), LabeledSlices(pos, neg, float("nan")),
                           scores, l)


class IncidencePoint(NamedTuple):
    fraction: float
    rho: float
    p_value: float
    n_positive: int


def correlation_curve(scores, ds: CohortDataset, fractions) -> list[IncidencePoint]:
    """For each fraction f, call the top ``round(f n)`` scores positive and
    rank-correlate per-state positive rates with ``pi``.

    States without individuals are left out.  A constant rate vector (e.g.
    f = 1, where every state's rate is 1) has no defined correlation and is
    reported as rho = 0, p = 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="mergesort")
    sizes = ds.state_sizes
    keep = sizes > 0
    out = []
    for f in fractions:
        f = float(f)
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"fraction {f} outside [0, 1]")
        n_pos = _round_half_up(f * ds.n)
        counts = np.bincount(ds.states[order[:n_pos]], minlength=ds.t)
        rate = counts[keep] / sizes[keep]
        try:
            rho, p = spearman(ds.pi[keep], rate)
        except (ZeroVariance, EmptyInput):
            rho, p = 0.0, 1.0
        out.append(IncidencePoint(f, rho, p, n_pos))
    return out


@dataclass
class IncidenceResult:
    points: list
    excluded_states: list
    scores: np.ndarray
    likelihood: np.ndarray


def incidence_curve(ds: CohortDataset, cfg: TrainConfig = TrainConfig(delta=0.9),
                    fractions=(0.05, 0.1, 0.2, 0.3, 0.5, 1.0), theta: float = 0.95,
                    k: int = 5) -> IncidenceResult:
    """Correlation between classifier-identified per-state rates and ``pi``
    as a function of the fraction of individuals called positive.

    The optimizer runs on the combined ``[X | Z]`` features; its likelihoods
    label a logistic classifier (top-theta vs. 3x bottom) whose out-of-fold
    scores rank every individual.
    """
    if ds.Z is None:
        raise DatasetError("incidence prediction needs pre-event features (Z)")
    XZ = ds.X.hstack(ds.Z)
    _, l, _ = train(ds, _train_cfg(cfg), X=XZ)
    slices = slice_by_likelihood(l, theta)
    scores, _ = _cv_scores(XZ, slices.positives, slices.negatives, k, cfg.seed, (3.0, 1.0))
    excluded = np.flatnonzero(ds.state_sizes == 0).tolist()
    return IncidenceResult(correlation_curve(scores, ds, fractions), excluded, scores, l)


@dataclass
class SimilarityResult:
    within_siu: float
    within_non_siu: float
    between: float
    silhouette: np.ndarray
    groups: np.ndarray
    n_siu: int
    n_non_siu: int


def similarity_report(ds: CohortDataset, cfg: TrainConfig = TrainConfig(delta=0.95),
                      top: float = 0.10) -> SimilarityResult:
    """Cosine similarity of disclosed positives (SIUs) to the non-disclosed
    individuals the optimizer ranks in its top ``top`` fraction.

    Rows with no features have no direction and are left out.
    """
    _, l, _ = train(ds, _train_cfg(cfg))
    norms = ds.X.row_norms()
    top_rows = percentile_select(l, 1.0 - top).indices
    siu = np.flatnonzero((ds.y == 1) & (norms > 0))
    non = np.setdiff1d(top_rows[norms[top_rows] > 0], siu)
    rows = np.concatenate((siu, non))
    groups = np.concatenate((np.ones(siu.size, dtype=np.int8), np.zeros(non.size, dtype=np.int8)))
    sub = ds.X.take_rows(rows)
    idx_siu = np.arange(siu.size)
    idx_non = np.arange(siu.size, rows.size)
    return SimilarityResult(
        within_siu=mean_cosine(sub, idx_siu, idx_siu),
        within_non_siu=mean_cosine(sub, idx_non, idx_non),
        between=mean_cosine(sub, idx_siu, idx_non),
        silhouette=silhouette_values(sub, groups),
        groups=groups,
        n_siu=int(siu.size),
        n_non_siu=int(non.size),
    )
