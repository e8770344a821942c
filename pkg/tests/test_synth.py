import numpy as np
import pytest
from scipy.stats import chi2_contingency

from cohortsgd.evaluation import roc_auc
from cohortsgd.objective import evaluate
from cohortsgd.stats import spearman
from cohortsgd.synth import GenConfig, generate, preset, preset_names


def test_presets():
    assert preset_names() == ["noise", "separable", "strong", "weak"]
    assert preset("noise").signal == 0
    assert preset("strong") == preset("strong")
    assert preset("weak").signal < preset("strong").signal
    assert preset("strong", seed=4).seed == 4
    with pytest.raises(ValueError):
        preset("nope")


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(positive_rate=0.0)
    with pytest.raises(ValueError):
        GenConfig(gamma=1.5)
    with pytest.raises(ValueError):
        GenConfig(signal=-1)
    with pytest.raises(ValueError):
        GenConfig(n=10, positive_rate=0.01)


def test_counts():
    ds = generate(GenConfig(n=2000, t=20, positive_rate=0.05, gamma=0.75, seed=7))
    assert ds.y_true.sum() == 100
    assert ds.y.sum() == 25
    assert np.all(ds.y <= ds.y_true)
    assert (ds.n, ds.X.n_cols, ds.t) == (2000, 200, 20)


def test_deterministic():
    a = generate(preset("strong", seed=3))
    b = generate(preset("strong", seed=3))
    c = generate(preset("strong", seed=4))
    assert a.equals(b)
    assert not a.equals(c)


def test_pi_is_realized_rate_without_noise():
    ds = generate(preset("strong", pi_noise=0.0, seed=1))
    rate = np.bincount(ds.states, weights=ds.y_true, minlength=ds.t) / ds.state_sizes
    np.testing.assert_allclose(ds.pi, rate)


def test_separable_one_feature_hyperplane_is_perfect():
    cfg = preset("separable", seed=2)
    ds = generate(cfg)
    marker = ds.X.toarray()[:, 0]
    assert np.all((marker > 0) == (ds.y_true == 1))
    w = np.zeros(ds.X.n_cols)
    w[0] = 1.0
    # At exactly 1 - positive_rate the threshold lands on a zero of the marker
    # and the tie rule selects everyone; just above it, exactly the positives.
    v = evaluate(ds.pi, ds.P, ds.y, ds.X.dot(w), 1 - cfg.positive_rate + 1e-3)
    assert v.combined == 1.0
    np.testing.assert_array_equal(ds.state_sizes, np.full(ds.t, ds.n // ds.t))


def test_signal_columns_separate_classes():
    ds = generate(preset("strong", seed=0))
    X = ds.X.toarray()
    pos, neg = X[ds.y_true == 1], X[ds.y_true == 0]
    assert pos[:, :10].mean() > neg[:, :10].mean() + 0.5
    assert abs(pos[:, 10:].mean() - neg[:, 10:].mean()) < 0.02
    noise = generate(preset("noise", seed=0)).X.toarray()
    assert abs(noise[:, :10].mean() - preset("noise").signal_base) < 0.05


def test_disclosure_is_uniform_over_states():
    table = np.zeros((2, 5))
    for seed in range(30):
        ds = generate(GenConfig(n=1000, t=5, positive_rate=0.1, gamma=0.5, state_skew=1.0,
                                seed=seed))
        pos = ds.y_true == 1
        table[0] += np.bincount(ds.states[pos & (ds.y == 1)], minlength=5)
        table[1] += np.bincount(ds.states[pos & (ds.y == 0)], minlength=5)
    assert chi2_contingency(table).pvalue > 0.001


def test_no_signal_means_no_separation():
    aucs = []
    for seed in range(10):
        ds = generate(preset("noise", seed=seed))
        aucs.append(roc_auc(ds.X.toarray().sum(axis=1), ds.y_true).auc)
    assert abs(np.mean(aucs) - 0.5) < 0.02


def test_gamma_zero_discloses_everyone():
    ds = generate(GenConfig(gamma=0.0, seed=5))
    np.testing.assert_array_equal(ds.y, ds.y_true)


def test_activity_is_shared_by_x_and_z():
    ds = generate(preset("strong", seed=0))
    x = ds.X.toarray()[:, 10:].sum(axis=1)
    z = ds.Z.toarray()[:, 10:].sum(axis=1)
    assert spearman(x, z)[0] > 0.2
    flat = generate(preset("strong", activity_spread=0.0, seed=0))
    x = flat.X.toarray()[:, 10:].sum(axis=1)
    z = flat.Z.toarray()[:, 10:].sum(axis=1)
    assert abs(spearman(x, z)[0]) < 0.1
