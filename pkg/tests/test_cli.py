import subprocess
import sys

import numpy as np
import pytest

from cohortsgd.cli import main
from cohortsgd.core import load_dataset, load_model
from cohortsgd.evaluation import read_report
from cohortsgd.sgd import init_hyperplane


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--preset", "strong", "--n", "300", "--m", "30", "--q-z", "10",
                 "--t", "6", "--seed", "1", "--out", str(d)]) == 0
    return d / "manifest.txt"


def test_synth_summary(tmp_path, capsys):
    args = ["synth", "--n", "2000", "--t", "20", "--positive-rate", "0.05", "--gamma", "0.75",
            "--seed", "7", "--out", str(tmp_path / "a")]
    assert main(args) == 0
    out = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert out["positives"] == "100" and out["disclosed"] == "25"
    args[-1] = str(tmp_path / "b")
    main(args)
    for name in ("X.tsv", "y.tsv", "P.tsv", "pi.tsv", "Z.tsv", "ytrue.tsv", "manifest.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_global_flags_before_command(tmp_path):
    assert main(["--seed", "5", "synth", "--preset", "separable", "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--preset", "separable", "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    assert load_dataset(tmp_path / "a" / "manifest.txt").equals(
        load_dataset(tmp_path / "b" / "manifest.txt"))


def test_train_eta_zero(data, tmp_path):
    assert main(["train", "--data", str(data), "--eta", "0", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    model = load_model(tmp_path / "model.tsv")
    np.testing.assert_array_equal(model.w, init_hyperplane(30, 3))
    lines = (tmp_path / "likelihood.tsv").read_text().splitlines()
    assert len(lines) == 300 and lines[0].startswith("0\t")
    assert (tmp_path / "trace.tsv").read_text().startswith("iteration\tobjective\n")


def test_train_then_score(data, tmp_path, capsys):
    assert main(["train", "--data", str(data), "--eta", "200", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["score", "--data", str(data), "--model", str(tmp_path / "model.tsv")]) == 0
    scored = [l.split("\t")[1] for l in capsys.readouterr().out.splitlines()]
    trained = [l.split("\t")[1] for l in (tmp_path / "likelihood.tsv").read_text().splitlines()]
    np.testing.assert_allclose(np.array(scored, float), np.array(trained, float), atol=1e-12)


def test_reports(data, tmp_path):
    base = ["--data", str(data), "--eta", "150", "--out", str(tmp_path)]
    assert main(["sweep", *base[:2], "--eta", "150", "--out", str(tmp_path),
                 "--gammas", "0.75", "--deltas", "0.85,0.9", "--folds", "3", "--threads", "1"]) == 0
    assert "cells" in read_report(tmp_path / "sweep.tsv")["curves"]
    assert main(["prescreen", *base, "--theta", "0.95", "--folds", "3"]) == 0
    summary = read_report(tmp_path / "prescreen.tsv")["summary"]
    assert int(summary["n_negative"]) == 3 * int(summary["n_positive"])
    assert main(["incidence", *base, "--fractions", "1.0", "--folds", "3"]) == 0
    assert len(read_report(tmp_path / "incidence.tsv")["curves"]["correlation"]) == 1
    assert main(["similarity", *base]) == 0
    assert set(read_report(tmp_path / "similarity.tsv")["curves"]) == {"cosine", "silhouette"}


def test_stability_repeatable(data, tmp_path):
    for sub in ("a", "b"):
        assert main(["stability", "--data", str(data), "--runs", "2", "--eta", "100",
                     "--seed", "4", "--out", str(tmp_path / sub)]) == 0
    assert (tmp_path / "a" / "stability.tsv").read_text() == \
        (tmp_path / "b" / "stability.tsv").read_text()


def test_sweep_thread_count_does_not_change_output(data, tmp_path, monkeypatch):
    common = ["sweep", "--data", str(data), "--eta", "100", "--gammas", "0.75",
              "--deltas", "0.9", "--folds", "3", "--no-baselines"]
    assert main([*common, "--threads", "1", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("COHORTSGD_THREADS", "2")
    assert main([*common, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "sweep.tsv").read_text() == (tmp_path / "b" / "sweep.tsv").read_text()


def test_exit_codes(data, tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing.txt")]) == 1
    assert main(["train", "--data", str(data), "--delta", "1.5"]) == 2
    assert main(["stability", "--data", str(data), "--runs", "1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    nolabels = tmp_path / "nl"
    nolabels.mkdir()
    for line in data.read_text().splitlines():
        key, _, name = line.partition(" = ")
        (nolabels / name).write_bytes((data.parent / name).read_bytes())
    (nolabels / "y.tsv").write_text("300\n")
    (nolabels / "manifest.txt").write_text(data.read_text())
    assert main(["train", "--data", str(nolabels / "manifest.txt"), "--eta", "5"]) == 1
    assert "positive" in capsys.readouterr().err


def test_module_entry_point(data):
    proc = subprocess.run([sys.executable, "-m", "cohortsgd", "train", "--data", str(data),
                           "--delta", "2"], capture_output=True, text=True)
    assert proc.returncode == 2 and "delta" in proc.stderr
