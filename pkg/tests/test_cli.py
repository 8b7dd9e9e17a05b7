import json
import subprocess
import sys

import numpy as np
import pytest

from ldlr import harness
from ldlr.cli import run
from ldlr.dataset import NoiseSpec, SynthSpec, read_matrix, synthesize, write_matrix
from ldlr.msvr import MsvrModel

SMALL = SynthSpec(n=50, m=4, d=5, rank=2, error_fraction=0.05, seed=2)


@pytest.fixture
def files(tmp_path):
    data = synthesize(SMALL)
    write_matrix(tmp_path / "x.csv", data.corrupted.features)
    write_matrix(tmp_path / "y.csv", data.corrupted.labels)
    write_matrix(tmp_path / "clean.csv", data.clean.labels)
    return tmp_path


def test_eval_identity(files, capsys):
    code = run(["eval", "--truth", str(files / "clean.csv"), "--pred", str(files / "clean.csv")])
    out = capsys.readouterr().out
    assert code == 0
    assert "chebyshev 0\n" in out and "cosine 1\n" in out
    assert len(out.strip().splitlines()) == 7


def test_recover_outputs(files, capsys):
    out = files / "r1"
    code = run(["recover", "--labels", str(files / "y.csv"), "--features", str(files / "x.csv"),
                "--alpha", "0.05", "--beta", "0.05", "--out", str(out)])
    assert code == 0
    d_tilde, _ = read_matrix(out / "d_tilde.csv")
    err, _ = read_matrix(out / "error.csv")
    y, _ = read_matrix(files / "y.csv")
    assert np.max(np.abs(d_tilde + err - y)) <= 1e-7
    diag = json.loads((out / "diagnostics.json").read_text())
    assert set(diag) == {"iterations", "converged", "final_residual", "residual_history"}
    assert diag["converged"] is True


def test_strict_non_convergence(files, tmp_path):
    cfg = harness.ExperimentConfig(synth=SMALL, repetitions=1)
    doc = cfg.to_dict()
    doc["recovery"]["max_iters"] = 2
    (tmp_path / "exp.json").write_text(json.dumps(doc))
    args = ["compare", "--config", str(tmp_path / "exp.json"), "--out", str(tmp_path / "c")]
    assert run(args) == 0
    assert run(args + ["--strict"]) == 2


def test_train_predict_graph_corrupt(files):
    assert run(["train", "--features", str(files / "x.csv"), "--labels", str(files / "y.csv"),
                "--kernel", "linear", "--kappa", "2", "--out", str(files / "m")]) == 0
    model = MsvrModel.load(files / "m" / "model.json")
    assert model.kernel.kind == "linear" and model.config.kappa == 2
    assert run(["predict", "--model", str(files / "m" / "model.json"),
                "--features", str(files / "x.csv"), "--out", str(files / "p")]) == 0
    pred, _ = read_matrix(files / "p" / "pred.csv")
    np.testing.assert_allclose(pred.sum(axis=1), 1.0, atol=1e-9)
    assert run(["graph", "--features", str(files / "x.csv"), "--gamma", "0.5",
                "--out", str(files / "g")]) == 0
    a, _ = read_matrix(files / "g" / "affinity.csv")
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
    assert run(["corrupt", "--features", str(files / "x.csv"), "--labels", str(files / "clean.csv"),
                "--noise-scale", "0.1", "--seed", "4", "--out", str(files / "n")]) == 0
    assert run(["corrupt", "--features", str(files / "x.csv"), "--labels", str(files / "clean.csv"),
                "--noise-scale", "0.1", "--seed", "4", "--out", str(files / "n2")]) == 0
    assert (files / "n" / "labels.csv").read_bytes() == (files / "n2" / "labels.csv").read_bytes()


def test_usage_errors(files, capsys):
    assert run([]) == 1
    assert run(["recover", "--labels", str(files / "y.csv")]) == 1
    assert "--features" in capsys.readouterr().err
    assert run(["train", "--features", str(files / "x.csv"), "--labels", str(files / "y.csv"),
                "--bandwidth", "-3", "--out", str(files / "m")]) == 1
    assert run(["eval", "--truth", str(files / "missing.csv"), "--pred", str(files / "y.csv")]) == 1
    assert run(["sweep", "--features", str(files / "x.csv"), "--labels", str(files / "y.csv"),
                "--param", "rho", "--values", "1", "--out", str(files / "s")]) == 1
    assert run(["eval", "--truth", str(files / "y.csv"), "--pred", str(files / "x.csv")]) == 1


def test_compare_matches_library(tmp_path, capsys):
    cfg = harness.ExperimentConfig(synth=SynthSpec(n=200, m=10, rank=3, error_fraction=0.05, seed=1),
                                   noise=NoiseSpec(0, 0.02, 0), repetitions=2)
    (tmp_path / "exp.json").write_text(json.dumps(cfg.to_dict()))
    assert run(["compare", "--config", str(tmp_path / "exp.json"), "--out", str(tmp_path / "cli")]) == 0
    harness.write_comparison(tmp_path / "lib", cfg, harness.compare_arms(cfg))
    for name in ("comparison.json", "config-echo.json", "ranks.csv"):
        assert (tmp_path / "cli" / name).read_bytes() == (tmp_path / "lib" / name).read_bytes()
    doc = json.loads((tmp_path / "cli" / "comparison.json").read_text())
    assert set(doc["arms"]) == set(harness.ARMS)


def test_flags_override_config(tmp_path):
    cfg = harness.ExperimentConfig(synth=SynthSpec(n=40, m=4, d=4, rank=2, seed=1), repetitions=1)
    (tmp_path / "exp.json").write_text(json.dumps(cfg.to_dict()))
    assert run(["sweep", "--config", str(tmp_path / "exp.json"), "--param", "alpha",
                "--values", "0.05,0.1", "--alpha", "0.2", "--nu", "0.3", "--seed", "9",
                "--noise-scale", "0.01", "--threads", "1", "--out", str(tmp_path / "s")]) == 0
    echo = harness.ExperimentConfig.from_dict(json.loads((tmp_path / "s" / "config-echo.json").read_text()))
    assert echo.recovery.alpha == 0.2 and echo.msvr.nu == 0.3 and echo.seed == 9
    assert echo.noise == NoiseSpec(0.0, 0.01, 9)
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3


def test_console_script(files):
    proc = subprocess.run([sys.executable, "-m", "ldlr.cli", "eval", "--truth", str(files / "clean.csv"),
                           "--pred", str(files / "y.csv")], capture_output=True, text=True,
                          env={"LDLR_LOG": "debug", "PATH": ""})
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("chebyshev ")
