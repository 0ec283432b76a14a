import subprocess
import sys

import numpy as np
import pytest

from geoaniso.grids import read_grid_csv


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "geoaniso", *map(str, args)], capture_output=True, text=True,
                          cwd=cwd)


def test_simulate_and_estimate(tmp_path):
    f = tmp_path / "f.csv"
    r = run("simulate", "--alpha", 0.5, "--lambda", 0.4, "--theta", 2, "--seed", 3, "--out", f)
    assert r.returncode == 0, r.stderr
    g = read_grid_csv(f)
    assert g.shape == (16, 16) and g.complete
    r = run("simulate", "--alpha", 0.5, "--lambda", 0.4, "--theta", 2, "--seed", 3)
    assert r.stdout == f.read_text()
    r = run("varmap", "--field", f)
    assert r.returncode == 0 and len(r.stdout.splitlines()) == 13
    r = run("estimate", "--method", "ml", "--field", f)
    assert r.returncode == 0, r.stderr
    head, row = r.stdout.splitlines()
    assert head.startswith("method,alpha,lambda,theta") and row.startswith("ML,")


@pytest.mark.parametrize("argv", [
    ("simulate", "--alpha", "0.5"),
    ("frobnicate",),
    ("estimate", "--method", "nv", "--field", "x.csv"),
    ("make-dataset", "--configs", "2"),
    ("bench", "--methods", "NF"),
])
def test_usage_errors_exit_1(argv, tmp_path):
    (tmp_path / "x.csv").write_text("1,2\n3,4\n")
    assert run(*argv, cwd=tmp_path).returncode == 1


@pytest.mark.parametrize("argv", [
    ("simulate", "--alpha", "0.5", "--lambda", "1.5", "--theta", "2"),
    ("estimate", "--method", "ml", "--field", "missing.csv"),
    ("inspect-model", "x.csv"),
])
def test_runtime_errors_exit_2(argv, tmp_path):
    (tmp_path / "x.csv").write_text("1,2\n3,4\n")
    r = run(*argv, cwd=tmp_path)
    assert r.returncode == 2
    assert "Traceback" not in r.stderr


def test_dataset_train_inspect(tmp_path):
    d, m = tmp_path / "d.bin", tmp_path / "m.bin"
    assert run("make-dataset", "--grid", "validation", "--configs", 6, "--seed", 2, "--out", d).returncode == 0
    assert (tmp_path / "d.bin.manifest.json").exists()
    r = run("train", "--dataset", d, "--kind", "nv", "--epochs", 1, "--batch-size", 3, "--out", m)
    assert r.returncode == 0, r.stderr
    r = run("inspect-model", m)
    assert "total trainable parameters: 852,147" in r.stdout
    f = tmp_path / "f.csv"
    run("simulate", "--alpha", 0.5, "--lambda", 0.4, "--theta", 2, "--out", f)
    r = run("estimate", "--method", "nf", "--model", m, "--field", f)
    assert r.returncode == 1
    r = run("estimate", "--method", "nv", "--model", m, "--field", f)
    assert r.returncode == 0 and r.stdout.splitlines()[1].startswith("NV,")


def test_scan_raster_with_missing(tmp_path):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(6, 6))
    p = tmp_path / "r.csv"
    np.savetxt(p, v, delimiter=",")
    r = run("scan", "--raster", p, "--method", "ml", "--window", 4)
    assert r.returncode == 0, r.stderr
    lines = r.stdout.splitlines()
    assert len(lines) == 37 and lines[0].startswith("row,col,status")
