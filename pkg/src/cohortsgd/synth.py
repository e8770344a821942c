"""Synthetic populations with known ground truth.

Individuals are spread over ``t`` states by a (optionally skewed)
multinomial, or dealt out evenly.  Each state gets its own cohort rate, exactly
``round(n * positive_rate)`` true positives are drawn with probability
proportional to their state's rate, and ``pi`` is the realized per-state
rate perturbed by multiplicative log-normal noise.  Features are Poisson
counts; the first ``n_signal`` columns of X (and of Z) have their rate
raised by ``signal`` (``z_signal``) for true positives.  An optional
gamma-distributed activity level per individual scales all of that
individual's rates in both X and Z.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import CohortDataset, SparseMatrix, one_hot
from .evaluation import hide_labels


@dataclass(frozen=True)
class GenConfig:
    n: int = 2000
    m: int = 200
    q_z: int = 50
    t: int = 20
    positive_rate: float = 0.05
    gamma: float = 0.75
    signal: float = 1.0
    z_signal: float = 0.0
    pi_noise: float = 0.0
    state_skew: float = 0.0
    seed: int = 0
    n_signal: int = 10
    signal_base: float = 0.3
    noise_rate: float = 0.05
    rate_spread: float = 0.8
    exclusive: bool = False
    balanced_states: bool = False
    activity_spread: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must lie in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if min(self.n, self.m, self.t) < 1 or self.q_z < 0:
            raise ValueError("n, m, t must be positive and q_z non-negative")
        for name in ("signal", "z_signal", "pi_noise", "state_skew", "rate_spread",
                     "signal_base", "noise_rate", "activity_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_signal > self.m or (self.q_z and self.n_signal > self.q_z):
            raise ValueError("n_signal exceeds the feature count")
        k = round(self.n * self.positive_rate)
        if k < 1 or k >= self.n:
            raise ValueError("positive_rate leaves no positives or no negatives")

    @property
    def n_positive(self) -> int:
        return round(self.n * self.positive_rate)

    def as_dict(self) -> dict:
        return asdict(self)


_PRESETS = {
    "separable": GenConfig(n=2000, m=200, q_z=50, t=20, positive_rate=0.05, gamma=0.75,
                           signal=2.0, z_signal=0.5, pi_noise=0.0, state_skew=0.0,
                           exclusive=True, balanced_states=True),
    "strong": GenConfig(n=2000, m=200, q_z=100, t=20, positive_rate=0.1, gamma=0.75,
                        signal=1.0, z_signal=0.6, pi_noise=0.1, state_skew=0.2,
                        signal_base=1.0, activity_spread=0.3),
    "weak": GenConfig(n=2000, m=200, q_z=100, t=20, positive_rate=0.1, gamma=0.75,
                      signal=0.5, z_signal=0.3, pi_noise=0.1, state_skew=0.2,
                      signal_base=1.0, activity_spread=0.3),
    "noise": GenConfig(n=2000, m=200, q_z=100, t=20, positive_rate=0.1, gamma=0.75,
                       signal=0.0, z_signal=0.0, pi_noise=0.1, state_skew=0.2,
                       signal_base=1.0),
}


def preset(name: str, **overrides) -> GenConfig:
    try:
        cfg = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def _poisson_matrix(rng, n, cols, rates_neg, rates_pos, y_true, activity) -> SparseMatrix:
    lam = np.where(y_true[:, None] == 1, rates_pos[None, :], rates_neg[None, :])
    lam = lam * activity[:, None]
    counts = rng.poisson(lam).astype(np.float64)
    return SparseMatrix.from_dense(counts) if cols else SparseMatrix.from_triplets(n, 0, [], [], [])


def generate(cfg: GenConfig) -> CohortDataset:
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(7)]
    rng_state, rng_rate, rng_x, rng_z, rng_pi, rng_hide, rng_act = streams

    weights = (np.arange(1, cfg.t + 1, dtype=np.float64)) ** (-cfg.state_skew)
    weights /= weights.sum()
    if cfg.balanced_states:
        # Sizes differ by at most one, so per-state rates rank like counts.
        states = rng_state.permutation(np.arange(cfg.n) % cfg.t)
    else:
        states = rng_state.choice(cfg.t, size=cfg.n, p=weights)
    sizes = np.bincount(states, minlength=cfg.t)

    state_rate = np.exp(cfg.rate_spread * rng_rate.standard_normal(cfg.t))
    p = state_rate[states]
    chosen = rng_rate.choice(cfg.n, size=cfg.n_positive, replace=False, p=p / p.sum())
    y_true = np.zeros(cfg.n, dtype=np.int8)
    y_true[chosen] = 1

    # Mean-one per-individual activity, shared by X and Z.
    if cfg.activity_spread > 0:
        shape = 1.0 / cfg.activity_spread ** 2
        activity = rng_act.gamma(shape, 1.0 / shape, cfg.n)
    else:
        activity = np.ones(cfg.n)

    neg = np.full(cfg.m, cfg.noise_rate)
    neg[:cfg.n_signal] = cfg.signal_base
    pos = neg.copy()
    pos[:cfg.n_signal] += cfg.signal
    X = _poisson_matrix(rng_x, cfg.n, cfg.m, neg, pos, y_true, activity)
    if cfg.exclusive:
        # Column 0 becomes a marker present only for true positives.
        dense = X.toarray()
        dense[:, 0] = np.where(y_true == 1, 1.0 + rng_x.poisson(cfg.signal, cfg.n), 0.0)
        X = SparseMatrix.from_dense(dense)

    y = hide_labels(y_true, cfg.gamma, seed=int(rng_hide.integers(2 ** 31))).y_hidden
    Z = None
    if cfg.q_z:
        zneg = np.full(cfg.q_z, cfg.noise_rate)
        zneg[:cfg.n_signal] = cfg.signal_base
        zpos = zneg.copy()
        zpos[:cfg.n_signal] += cfg.z_signal
        Z = _poisson_matrix(rng_z, cfg.n, cfg.q_z, zneg, zpos, y_true, activity)

    pos_counts = np.bincount(states, weights=y_true, minlength=cfg.t)
    realized = np.divide(pos_counts, sizes, out=np.zeros(cfg.t), where=sizes > 0)
    noise = np.exp(cfg.pi_noise * rng_pi.standard_normal(cfg.t) - 0.5 * cfg.pi_noise ** 2)
    pi = realized * noise

    return CohortDataset(X=X, y=y, P=one_hot(states, cfg.t), pi=pi, Z=Z, y_true=y_true)
