import numpy as np
import pytest

from cohortsgd.baselines import (LinearClassifier, augment_with_pi, load_classifier,
                                 save_classifier, train_logistic, train_perceptron)
from cohortsgd.core import SparseMatrix, one_hot
from cohortsgd.errors import DimensionMismatch, MalformedLine, SingleClass
from cohortsgd.evaluation import roc_auc


def separable(rng, n=80):
    y = (np.arange(n) % 4 == 0).astype(int)
    X = rng.random((n, 5))
    X[:, 0] = np.where(y == 1, 2.0 + rng.random(n), rng.random(n))
    return SparseMatrix.from_dense(X), y


def test_perceptron_separable():
    X, y = separable(np.random.default_rng(0))
    clf = train_perceptron(X, y, epochs=50, seed=0)
    assert roc_auc(clf.decision_function(X), y).auc == 1.0
    assert clf.kind == "perceptron" and clf.weights.size == 6


def test_perceptron_xor_keeps_errors():
    X = SparseMatrix.from_dense([[0, 0], [1, 1], [0, 1], [1, 0]])
    y = np.array([0, 0, 1, 1])
    clf = train_perceptron(X, y, epochs=100, seed=0)
    pred = (clf.decision_function(X) > 0).astype(int)
    assert np.any(pred != y)


def test_perceptron_deterministic():
    X, y = separable(np.random.default_rng(1))
    a = train_perceptron(X, y, epochs=3, seed=4)
    b = train_perceptron(X, y, epochs=3, seed=4)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_logistic_separable():
    X, y = separable(np.random.default_rng(2))
    clf = train_logistic(X, y, epochs=50, seed=0)
    assert roc_auc(clf.predict_proba(X), y).auc == 1.0
    p = clf.predict_proba(X)
    assert np.all((p > 0) & (p < 1))


def test_logistic_class_weights_raise_minority_recall():
    rng = np.random.default_rng(3)
    n = 600
    y = (rng.random(n) < 0.15).astype(int)
    X = SparseMatrix.from_dense(np.column_stack([y + rng.normal(0, 1.0, n), rng.random(n)]))
    plain = train_logistic(X, y, class_weights=(1, 1), epochs=30, seed=0)
    weighted = train_logistic(X, y, class_weights=(3, 1), epochs=30, seed=0)
    recall = lambda clf: np.mean(clf.predict_proba(X)[y == 1] > 0.5)
    assert recall(weighted) > recall(plain)


def test_logistic_heavy_l2_goes_to_base_rate():
    rng = np.random.default_rng(4)
    X, y = separable(rng, n=200)
    clf = train_logistic(X, y, l2=1e6, epochs=30, seed=0)
    assert np.abs(clf.coef).max() < 1e-4
    assert np.mean(clf.predict_proba(X)) == pytest.approx(y.mean(), abs=0.05)
    with pytest.raises(ValueError):
        train_logistic(X, y, l2=-1)


def test_single_class_rejected():
    X = SparseMatrix.from_dense(np.eye(3))
    with pytest.raises(SingleClass):
        train_perceptron(X, [0, 0, 0])
    with pytest.raises(SingleClass):
        train_logistic(X, [1, 1, 1])
    with pytest.raises(DimensionMismatch):
        train_logistic(X, [1, 0])


def test_augment_with_pi():
    X = SparseMatrix.from_dense([[1, 0], [0, 2], [3, 0]])
    P = one_hot([1, 0, 1], 2)
    out = augment_with_pi(X, P, [0.25, 0.75]).toarray()
    np.testing.assert_array_equal(out, [[1, 0, 0.75], [0, 2, 0.25], [3, 0, 0.75]])
    zeros = augment_with_pi(X, P, [0.0, 0.0])
    assert zeros.n_cols == 3 and not zeros.toarray()[:, 2].any()
    with pytest.raises(DimensionMismatch):
        augment_with_pi(X, P, [0.1, 0.2, 0.3])
    with pytest.raises(DimensionMismatch):
        augment_with_pi(X, one_hot([0, 1], 2), [0.1, 0.2])


def test_classifier_round_trip(tmp_path):
    clf = LinearClassifier(np.array([0.0, -1.5, 0.1 + 0.2, 2.0]), "logistic")
    save_classifier(clf, tmp_path / "c.tsv")
    back = load_classifier(tmp_path / "c.tsv")
    np.testing.assert_array_equal(back.weights, clf.weights)
    assert back.kind == "logistic" and back.bias == 2.0
    (tmp_path / "bad.tsv").write_text("3\tsvm\n")
    with pytest.raises(MalformedLine):
        load_classifier(tmp_path / "bad.tsv")
    with pytest.raises(DimensionMismatch):
        clf.decision_function(SparseMatrix.from_dense(np.eye(2)))
