import subprocess
import sys

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from fundata import io as fio
from fundata.cli import main
from fundata.core import DenseFD


def run(*argv):
    return main([str(a) for a in argv])


def labels_of(path):
    return fio.read_array_csv(path)[:, 0].astype(int)


@pytest.fixture(scope="module")
def clusters(tmp_path_factory):
    d = tmp_path_factory.mktemp("clusters")
    code = run("simulate", "kl", "--basis", "wiener", "--n-functions", 3, "--n-obs", 200,
               "--centers", "6,-3;-1.5,4.5;0,0", "--cluster-std", "2,1;0.5,1;1,1",
               "--seed", 0, "-o", d / "x.csv")
    assert code == 0
    return d


def test_simulate_kl_example(tmp_path):
    out = tmp_path / "out.csv"
    assert run("simulate", "kl", "--basis", "bsplines", "--n-functions", 5, "--n-obs", 10,
               "--decay", "exponential", "--seed", 7, "-o", out) == 0
    fd = fio.read_csv_dense(out)
    assert fd.values.shape == (10, 101)


def test_simulate_brownian_starts_at_zero(tmp_path):
    out = tmp_path / "b.csv"
    assert run("simulate", "brownian", "--kind", "fractional", "--hurst", 0.7,
               "--n-obs", 10, "--grid", "0:1:101", "-o", out) == 0
    fd = fio.read_csv_dense(out)
    assert np.all(fd.values[:, 0] == 0)


def test_simulate_sparse_noisy_and_image(tmp_path):
    assert run("simulate", "kl", "--n-obs", 20, "--noise", 0.05, "--sparsify", 0.5,
               "--epsilon", 0.05, "-o", tmp_path / "s.csv") == 0
    fd = fio.read_csv_irregular(tmp_path / "s.csv")
    assert fd.n_obs == 20
    assert run("simulate", "kl", "--basis2", "fourier", "--n-functions", 2, "--grid", "0:1:11",
               "--grid2", "0:1:7", "--n-obs", 5, "-o", tmp_path / "img.json") == 0
    img = fio.read_manifest(tmp_path / "img.json")
    assert img[0].values.shape == (5, 11, 7)


def test_usage_errors(tmp_path, capsys):
    assert run("simulate", "kl", "--basis", "nope", "-o", tmp_path / "x.csv") == 2
    assert "--basis" in capsys.readouterr().err
    assert run("simulate", "kl", "--grid", "0:1", "-o", tmp_path / "x.csv") == 2
    assert run("simulate", "kl") == 2
    assert not (tmp_path / "x.csv").exists()


def test_bad_env_seed(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FUNDATA_SEED", "abc")
    assert run("simulate", "kl", "-o", tmp_path / "x.csv") == 2
    assert "FUNDATA_SEED" in capsys.readouterr().err


def test_env_seed_is_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FUNDATA_SEED", "5")
    run("simulate", "kl", "--n-obs", 4, "-o", tmp_path / "a.csv")
    monkeypatch.delenv("FUNDATA_SEED")
    run("simulate", "kl", "--n-obs", 4, "--seed", 5, "-o", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_runtime_error(tmp_path, capsys):
    assert run("smooth", tmp_path / "missing.csv", "-o", tmp_path / "y.csv") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("fundata: error:")


def test_console_script_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fundata.cli", "plot", str(tmp_path / "no.csv"),
                           "-o", str(tmp_path / "p.svg")], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("fundata: error:")


def test_smooth_constant_and_line(tmp_path):
    grid = np.linspace(0, 1, 21)
    fio.write_csv(DenseFD({"t": grid}, np.full((3, 21), 2.5)), tmp_path / "c.csv")
    assert run("smooth", tmp_path / "c.csv", "--bandwidth", 0.2, "-o", tmp_path / "cs.csv") == 0
    np.testing.assert_allclose(fio.read_csv_dense(tmp_path / "cs.csv").values, 2.5, atol=1e-12)
    fio.write_csv(DenseFD({"t": grid}, (1 + 3 * grid)[None]), tmp_path / "l.csv")
    assert run("smooth", tmp_path / "l.csv", "--degree", 1, "--bandwidth", 0.15,
               "--output-grid", "0:1:33", "-o", tmp_path / "ls.csv") == 0
    out = fio.read_csv_dense(tmp_path / "ls.csv")
    np.testing.assert_allclose(out.values[0], 1 + 3 * np.linspace(0, 1, 33), atol=1e-8)


def test_smooth_nadaraya_watson_oracle(tmp_path):
    grid = np.linspace(0, 1, 41)
    y = np.sin(6 * grid) + np.random.default_rng(0).normal(scale=0.1, size=41)
    fio.write_csv(DenseFD({"t": grid}, y[None]), tmp_path / "n.csv")
    h = 0.1
    assert run("smooth", tmp_path / "n.csv", "--kernel", "epanechnikov", "--degree", 0,
               "--bandwidth", h, "-o", tmp_path / "ns.csv") == 0
    got = fio.read_csv_dense(tmp_path / "ns.csv").values[0]
    u = (grid[None, :] - grid[:, None]) / h
    w = np.where(np.abs(u) < 1, 1 - u ** 2, 0.0)
    np.testing.assert_allclose(got, w @ y / w.sum(1), atol=1e-12)


def test_moments_outputs(tmp_path, capsys):
    run("simulate", "kl", "--n-obs", 200, "--noise", 0.05, "-o", tmp_path / "x.csv")
    assert run("moments", tmp_path / "x.csv", "--mean", tmp_path / "m.csv",
               "--cov", tmp_path / "c.csv", "--smooth-cov") == 0
    x = fio.read_csv_dense(tmp_path / "x.csv").values
    np.testing.assert_allclose(fio.read_csv_dense(tmp_path / "m.csv").values[0], x.mean(0),
                               atol=1e-12)
    cov = fio.read_array_csv(tmp_path / "c.csv")
    assert cov.shape == (101, 101)
    assert "noise_variance," in capsys.readouterr().out


def test_fpca_outputs(tmp_path, capsys):
    run("simulate", "kl", "--n-obs", 300, "--n-functions", 4, "-o", tmp_path / "x.csv")
    out = tmp_path / "fp"
    assert run("fpca", tmp_path / "x.csv", "--n-comp", 0.99, "--out-dir", out) == 0
    vals = fio.read_array_csv(out / "eigenvalues.csv")[:, 0]
    assert np.all(np.diff(vals) <= 0)
    err = float(capsys.readouterr().out.strip().split(",")[1])
    assert err <= 0.01 + 1e-8
    scores = fio.read_array_csv(out / "scores.csv")
    assert scores.shape == (300, vals.size)
    assert run("fpca", "--model", out / "model.json", "--inverse", out / "scores.csv",
               "--out-dir", out) == 0
    rec = fio.read_manifest(out / "reconstruction.json")[0].values
    x = fio.read_csv_dense(tmp_path / "x.csv").values
    assert np.sum((rec - x) ** 2) / np.sum((x - x.mean(0)) ** 2) <= 0.01 + 1e-8
    assert run("fpca", tmp_path / "x.csv", "--model", out / "model.json",
               "--out-dir", tmp_path / "again") == 0
    np.testing.assert_allclose(fio.read_array_csv(tmp_path / "again" / "scores.csv"), scores,
                               atol=1e-10)


def test_fpca_two_components(tmp_path):
    run("simulate", "kl", "--n-obs", 100, "-o", tmp_path / "a.csv")
    run("simulate", "kl", "--n-obs", 100, "--basis", "fourier", "--seed", 3, "-o", tmp_path / "b.csv")
    a, b = fio.read_csv_dense(tmp_path / "a.csv"), fio.read_csv_dense(tmp_path / "b.csv")
    from fundata.core import MultivariateFD
    from fundata.fpca import ufpca_fit
    fio.write_manifest(MultivariateFD([a, b]), tmp_path / "ab.json")
    assert run("fpca", tmp_path / "ab.json", "--n-comp", "0.99,0.99", "--out-dir",
               tmp_path / "o") == 0
    vals = fio.read_array_csv(tmp_path / "o" / "eigenvalues.csv")[:, 0]
    expected = ufpca_fit(a, 0.99).n_components + ufpca_fit(b, 0.99).n_components
    assert vals.size == expected
    assert (tmp_path / "o" / "eigenfunctions_1.csv").exists()


def test_fpca_inverse_requires_model(tmp_path):
    assert run("fpca", "--inverse", tmp_path / "s.csv", "--out-dir", tmp_path) == 2


def test_fcubt_cli(clusters):
    d = clusters
    assert run("fcubt", d / "x.csv", "--seed", 0, "--join", 0.95, "-o", d / "lab.csv",
               "--tree", d / "tree.json", "--dot", d / "tree.dot",
               "--predict", d / "x.csv") == 0
    truth = labels_of(d / "x_labels.csv")
    labels = labels_of(d / "lab.csv")
    assert labels.size == 200
    assert adjusted_rand_score(truth, labels) >= 0.9
    np.testing.assert_array_equal(labels_of(d / "lab_predicted.csv"), labels)
    assert (d / "tree.dot").read_text().startswith("digraph")


def test_fcubt_min_size(clusters):
    d = clusters
    assert run("fcubt", d / "x.csv", "--min-size", 200, "-o", d / "one.csv") == 0
    assert np.all(labels_of(d / "one.csv") == 0)


def test_plot_examples(tmp_path):
    grid = np.linspace(0, 1, 11)
    fio.write_csv(DenseFD({"t": grid}, np.vstack([grid, grid ** 2])), tmp_path / "two.csv")
    fio.write_array_csv(tmp_path / "lab.csv", np.array([[0], [1]]), header=["label"])
    assert run("plot", tmp_path / "two.csv", "--labels", tmp_path / "lab.csv", "--title", "T",
               "-o", tmp_path / "p.svg") == 0
    svg = (tmp_path / "p.svg").read_text()
    assert svg.count("<polyline") == 2
    import re
    assert len(set(re.findall(r'<polyline[^>]*stroke="(#[0-9a-f]{6})"', svg))) == 2
    assert ">T</text>" in svg


def test_convert_roundtrips(tmp_path):
    run("simulate", "kl", "--n-obs", 6, "--sparsify", 0.5, "--epsilon", 0.05,
        "-o", tmp_path / "s.csv")
    assert run("convert", tmp_path / "s.csv", "--irregular", "--to", "dense",
               "-o", tmp_path / "d.csv") == 0
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "s.csv").read_bytes()
    run("simulate", "kl", "--n-obs", 6, "-o", tmp_path / "x.csv")
    fio.write_array_csv(tmp_path / "lab.csv", np.arange(6)[:, None] % 2, header=["label"])
    assert run("convert", tmp_path / "x.csv", "--labels", tmp_path / "lab.csv",
               "-o", tmp_path / "x.ts") == 0
    assert run("convert", tmp_path / "x.ts", "-o", tmp_path / "back.csv") == 0
    np.testing.assert_array_equal(fio.read_csv_dense(tmp_path / "back.csv").values,
                                  fio.read_csv_dense(tmp_path / "x.csv").values)
    assert (tmp_path / "back_labels.csv").read_text().split() == ["label"] + ["0", "1"] * 3


def _all_commands(d):
    return [
        ("simulate", "kl", "--n-obs", 60, "--centers", "6,-3;-1.5,4.5;0,0", "--cluster-std",
         "2,1;0.5,1;1,1", "--n-functions", 3, "--noise", 0.01, "-o", d / "x.csv"),
        ("simulate", "brownian", "--kind", "fractional", "--hurst", 0.3, "--n-obs", 5,
         "-o", d / "b.csv"),
        ("smooth", d / "x.csv", "-o", d / "s.csv"),
        ("moments", d / "x.csv", "--mean", d / "m.csv", "--cov", d / "c.csv", "--smooth-cov"),
        ("fpca", d / "x.csv", "--out-dir", d / "fp"),
        ("fcubt", d / "x.csv", "--join", 0.95, "-o", d / "lab.csv", "--tree", d / "t.json",
         "--dot", d / "t.dot"),
        ("plot", d / "x.csv", "--labels", d / "lab.csv", "-o", d / "p.svg"),
        ("convert", d / "x.csv", "--to", "irregular", "-o", d / "i.csv"),
    ]


def test_determinism_all_subcommands(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        for cmd in _all_commands(d):
            assert run(*cmd) == 0, cmd
        outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    assert outs[0].keys() == outs[1].keys() and len(outs[0]) >= 12
    for key in outs[0]:
        assert outs[0][key] == outs[1][key], key
