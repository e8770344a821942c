import numpy as np
import pytest

from cohortsgd.core import (CohortDataset, HyperplaneModel, SparseMatrix, load_dataset,
                            load_model, one_hot, read_matrix, read_vector, save_dataset,
                            save_model)
from cohortsgd.errors import (DatasetError, DimensionMismatch, DuplicateCoordinate,
                              MalformedLine, MissingFile, NonOneHotProperty)


def write_bundle(tmp_path, P_lines="3\t2\n0\t0\t1\n1\t1\t1\n2\t1\t1\n", pi="2\n0\t0.5\n1\t0.25\n"):
    (tmp_path / "X.tsv").write_text("3\t2\n0\t0\t1.5\n1\t1\t2\n2\t0\t1\n2\t1\t1\n")
    (tmp_path / "y.tsv").write_text("3\n0\t1\n")
    (tmp_path / "P.tsv").write_text(P_lines)
    (tmp_path / "pi.tsv").write_text(pi)
    m = tmp_path / "manifest.txt"
    m.write_text("features = X.tsv\nlabels = y.tsv\nproperties = P.tsv\npi = pi.tsv\n")
    return m


def random_dataset(rng, n=30, m=6, t=4, with_z=True):
    X = rng.poisson(0.7, size=(n, m)).astype(float) * rng.random((n, m))
    states = rng.integers(0, t, n)
    y_true = (rng.random(n) < 0.3).astype(int)
    y_true[0] = 1
    y = y_true * (rng.random(n) < 0.5)
    return CohortDataset(X=SparseMatrix.from_dense(X), y=y, P=one_hot(states, t),
                         pi=rng.random(t), Z=SparseMatrix.from_dense(X[:, :3]) if with_z else None,
                         y_true=y_true)


def test_fixture_loads(tmp_path):
    ds = load_dataset(write_bundle(tmp_path))
    assert (ds.n, ds.X.n_cols, ds.t) == (3, 2, 2)
    np.testing.assert_array_equal(ds.y, [1, 0, 0])
    np.testing.assert_array_equal(ds.states, [0, 1, 1])
    np.testing.assert_array_equal(ds.X.toarray(), [[1.5, 0], [0, 2], [1, 1]])
    assert ds.Z is None and ds.y_true is None


def test_two_states_for_row_zero(tmp_path):
    m = write_bundle(tmp_path, P_lines="3\t2\n0\t0\t1\n0\t1\t1\n1\t1\t1\n2\t1\t1\n")
    with pytest.raises(NonOneHotProperty) as exc:
        load_dataset(m)
    assert exc.value.row == 0


def test_pi_length_mismatch(tmp_path):
    m = write_bundle(tmp_path, pi="3\n0\t0.5\n1\t0.25\n2\t0.1\n")
    with pytest.raises(DimensionMismatch):
        load_dataset(m)


def test_missing_file(tmp_path):
    m = write_bundle(tmp_path)
    (tmp_path / "pi.tsv").unlink()
    with pytest.raises(MissingFile, match="pi.tsv"):
        load_dataset(m)


def test_malformed_line_reports_line(tmp_path):
    m = write_bundle(tmp_path)
    (tmp_path / "X.tsv").write_text("3\t2\n0\t0\t1.5\n1\tx\t2\n")
    with pytest.raises(MalformedLine) as exc:
        load_dataset(m)
    assert exc.value.line == 3 and str(exc.value.path).endswith("X.tsv")


def test_duplicate_coordinate(tmp_path):
    p = tmp_path / "A.tsv"
    p.write_text("2\t2\n0\t1\t1\n1\t0\t1\n0\t1\t2\n")
    with pytest.raises(DuplicateCoordinate) as exc:
        read_matrix(p)
    assert exc.value.line == 4


def test_out_of_range_coordinate(tmp_path):
    p = tmp_path / "A.tsv"
    p.write_text("2\t2\n0\t2\t1\n")
    with pytest.raises(DimensionMismatch):
        read_matrix(p)


def test_vector_errors(tmp_path):
    p = tmp_path / "v.tsv"
    p.write_text("2\n0\t1\n0\t1\n")
    with pytest.raises(DuplicateCoordinate):
        read_vector(p, integer=True)
    p.write_text("2\n0\t2\n")
    with pytest.raises(MalformedLine):
        read_vector(p, integer=True)
    p.write_text("2\n0\tnan\n")
    with pytest.raises(MalformedLine):
        read_vector(p)


def test_manifest_errors(tmp_path):
    m = write_bundle(tmp_path)
    m.write_text("features = X.tsv\nlabels = y.tsv\nproperties = P.tsv\n")
    with pytest.raises(MalformedLine, match="pi"):
        load_dataset(m)
    m.write_text("features X.tsv\n")
    with pytest.raises(MalformedLine):
        load_dataset(m)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip(tmp_path, seed):
    ds = random_dataset(np.random.default_rng(seed), with_z=seed % 2 == 0)
    back = load_dataset(save_dataset(ds, tmp_path / "d"))
    assert back.equals(ds)
    assert (back.Z is None) == (seed % 2 == 1)
    manifest = (tmp_path / "d" / "manifest.txt").read_text()
    assert ("prefeatures" in manifest) == (seed % 2 == 0)
    np.testing.assert_array_equal(back.y_true, ds.y_true)


def test_round_trip_preserves_awkward_floats(tmp_path):
    X = SparseMatrix.from_dense(np.array([[0.1 + 0.2, 1e-300], [np.pi, 2.0 ** -52]]))
    ds = CohortDataset(X=X, y=[1, 0], P=one_hot([0, 0], 1), pi=[1.0 / 3.0])
    back = load_dataset(save_dataset(ds, tmp_path))
    assert back.equals(ds)


def test_dataset_invariants():
    X = SparseMatrix.from_dense(np.eye(3))
    P = one_hot([0, 1, 1], 2)
    with pytest.raises(DimensionMismatch):
        CohortDataset(X=X, y=[1, 0], P=P, pi=[1, 1])
    with pytest.raises(DatasetError):
        CohortDataset(X=X, y=[1, 0, 2], P=P, pi=[1, 1])
    with pytest.raises(DatasetError):
        CohortDataset(X=X, y=[1, 0, 0], P=P, pi=[1, -1])
    with pytest.raises(DatasetError, match="true positive"):
        CohortDataset(X=X, y=[1, 0, 0], P=P, pi=[1, 1], y_true=[0, 1, 0])
    with pytest.raises(NonOneHotProperty):
        CohortDataset(X=X, y=[1, 0, 0], P=SparseMatrix.from_dense([[1, 0], [0, 2], [1, 0]]),
                      pi=[1, 1])


def test_sparse_matrix_ops():
    rng = np.random.default_rng(3)
    a = rng.random((7, 5)) * (rng.random((7, 5)) < 0.4)
    b = rng.random((7, 2))
    A = SparseMatrix.from_dense(a)
    v = rng.standard_normal(5)
    np.testing.assert_allclose(A.dot(v), a @ v)
    np.testing.assert_array_equal(A.take_rows([4, 1]).toarray(), a[[4, 1]])
    np.testing.assert_array_equal(A.hstack(SparseMatrix.from_dense(b)).toarray(),
                                  np.hstack([a, b]))
    np.testing.assert_allclose(A.row_norms(), np.linalg.norm(a, axis=1))
    assert A.nnz == np.count_nonzero(a)
    assert A == SparseMatrix.from_triplets(7, 5, *np.nonzero(a), a[np.nonzero(a)])
    with pytest.raises(DimensionMismatch):
        A.dot(np.ones(4))


def test_subset_keeps_pi():
    ds = random_dataset(np.random.default_rng(0))
    sub = ds.subset([3, 0, 5])
    np.testing.assert_array_equal(sub.X.toarray(), ds.X.toarray()[[3, 0, 5]])
    np.testing.assert_array_equal(sub.states, ds.states[[3, 0, 5]])
    np.testing.assert_array_equal(sub.pi, ds.pi)


def test_model_round_trip(tmp_path):
    w = np.array([0.0, 0.6, 0.0, -0.8])
    model = HyperplaneModel(w=w, delta=0.9, eta=123, seed=4, objective_final=0.1 + 0.2)
    save_model(model, tmp_path / "m.tsv")
    text = (tmp_path / "m.tsv").read_text().splitlines()
    assert text[0].split("\t")[:4] == ["4", "0.9", "123", "4"]
    assert len(text) == 3
    back = load_model(tmp_path / "m.tsv")
    np.testing.assert_array_equal(back.w, w)
    assert (back.delta, back.eta, back.seed, back.objective_final) == (0.9, 123, 4, 0.1 + 0.2)
