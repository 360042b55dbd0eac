"""End-to-end smoke tests of every CLI subcommand."""

import json
import os

import numpy as np
import pytest

from timeflow import build_flow, load_checkpoint, save_checkpoint
from timeflow.cli import run


def run_cli(*argv):
    return run(list(argv))


TRAIN_TINY = [
    "train", "--dataset", "toy:two_gaussians", "--n", "400", "--layers", "2",
    "--hidden", "6", "--epochs", "2", "--batch-size", "128", "--lr", "0.005",
    "--seed", "3",
]


def test_train_smoke(tmp_path):
    out = tmp_path / "run"
    assert run_cli(*TRAIN_TINY, "--out", str(out)) == 0
    assert (out / "checkpoint.json").exists()
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,train_nll,val_nll"
    assert len(history) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 3
    assert "numpy" in manifest["versions"]


def test_train_zero_epochs_checkpoint_is_initialization(tmp_path):
    out = tmp_path / "run"
    argv = list(TRAIN_TINY)
    argv[argv.index("--epochs") + 1] = "0"
    assert run_cli(*argv, "--out", str(out)) == 0
    loaded = load_checkpoint(out / "checkpoint.json")
    from timeflow import SolverConfig

    fresh = build_flow(2, n_layers=2, kind="coupling", family="quadratic",
                       hidden_dims=(6,), solver=SolverConfig(steps=16), seed=3)
    for a, b in zip(loaded.parameters(), fresh.parameters()):
        assert np.array_equal(a, b)
    history = (out / "history.csv").read_text().splitlines()
    assert history == ["epoch,train_nll,val_nll"]


def test_train_outputs_byte_identical_across_runs(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(*TRAIN_TINY, "--out", str(out1)) == 0
    assert run_cli(*TRAIN_TINY, "--out", str(out2)) == 0
    assert (out1 / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()
    assert (out1 / "checkpoint.json").read_bytes() == (out2 / "checkpoint.json").read_bytes()


def test_sample_and_density_grid(tmp_path):
    out = tmp_path / "run"
    assert run_cli(*TRAIN_TINY, "--out", str(out)) == 0
    ck = str(out / "checkpoint.json")

    sample_out = tmp_path / "samples"
    assert run_cli("sample", "--checkpoint", ck, "--n", "50", "--seed", "1",
                   "--out", str(sample_out)) == 0
    lines = (sample_out / "samples.csv").read_text().splitlines()
    assert lines[0] == "x0,x1"
    assert len(lines) == 51

    sample_out2 = tmp_path / "samples2"
    assert run_cli("sample", "--checkpoint", ck, "--n", "50", "--seed", "1",
                   "--out", str(sample_out2)) == 0
    assert ((sample_out / "samples.csv").read_bytes()
            == (sample_out2 / "samples.csv").read_bytes())

    grid_out = tmp_path / "grid"
    assert run_cli("density-grid", "--checkpoint", ck, "--range=-4,4",
                   "--grid", "11", "--out", str(grid_out)) == 0
    lines = (grid_out / "density.csv").read_text().splitlines()
    assert lines[0] == "x,y,log_density"
    assert len(lines) == 1 + 121


def test_invert_bench_smoke(tmp_path):
    out = tmp_path / "bench"
    assert run_cli("invert-bench", "--n", "20", "--tolerances", "1e-3,1e-4",
                   "--seed", "0", "--out", str(out)) == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "tolerance,method,mean_steps,failures"
    assert len(lines) == 5


def test_universality_smoke(tmp_path, capsys):
    out = tmp_path / "uni"
    assert run_cli("universality", "--target", "affine", "--alpha", "2",
                   "--beta", "1", "--s", "0.5,0.333,0.25,0.2",
                   "--out", str(out)) == 0
    printed = capsys.readouterr().out
    slope = float(printed.split("fitted slope of log(sup_error) vs 1/s:")[1].split()[0])
    assert 0.9 <= slope <= 1.1
    assert (out / "convergence.csv").exists()


def test_gradcheck_smoke(tmp_path, capsys):
    out = tmp_path / "grad"
    assert run_cli("gradcheck", "--seed", "7", "--out", str(out)) == 0
    printed = capsys.readouterr().out
    overall = float(printed.split("overall max relative error:")[1].split()[0])
    assert overall < 1e-4
    assert (out / "gradcheck.csv").exists()


def test_roundtrip_smoke(tmp_path):
    out = tmp_path / "rt"
    assert run_cli("roundtrip", "--dim", "4", "--layers", "4", "--n", "50",
                   "--seed", "0", "--out", str(out)) == 0
    lines = (out / "roundtrip.csv").read_text().splitlines()
    assert lines[0] == "n,max_abs_error,tolerance"


def test_config_file_provides_defaults_flags_win(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 0, "n": 300, "seed": 3}))
    out = tmp_path / "run"
    argv = ["train", "--dataset", "toy:two_gaussians", "--layers", "2",
            "--hidden", "6", "--batch-size", "128",
            "--config", str(cfg), "--n", "400", "--out", str(out)]
    assert run_cli(*argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 0  # from config file
    assert manifest["config"]["n"] == 400  # explicit flag wins
    assert manifest["seed"] == 3


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "x")) == 3


def test_exit_codes():
    import tempfile

    with tempfile.TemporaryDirectory() as td:
        # invalid configuration values
        assert run_cli("train", "--layers", "0", "--epochs", "1",
                       "--out", os.path.join(td, "a")) == 3
        assert run_cli("train", "--dataset", "toy:spiral",
                       "--out", os.path.join(td, "b")) == 3
        # missing checkpoint file
        assert run_cli("sample", "--checkpoint", os.path.join(td, "nope.json"),
                       "--out", os.path.join(td, "c")) == 4
        # usage errors come from argparse
        with pytest.raises(SystemExit) as err:
            run_cli("train", "--no-such-flag")
        assert err.value.code == 2
        with pytest.raises(SystemExit):
            run_cli("not-a-command")


def test_density_grid_requires_2d_model(tmp_path):
    model = build_flow(3, n_layers=1, kind="autoregressive", hidden_dims=(4,), seed=0)
    ck = tmp_path / "m.json"
    save_checkpoint(model, ck)
    assert run_cli("density-grid", "--checkpoint", str(ck),
                   "--out", str(tmp_path / "g")) == 3


def test_preset_loading(tmp_path):
    out = tmp_path / "p"
    # presets carry full-scale hyperparameters; override epochs for a smoke run
    code = run_cli("train", "--preset", "miniboone", "--dataset",
                   "toy:two_gaussians", "--n", "200", "--epochs", "0",
                   "--hidden", "6", "--out", str(out))
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["layers"] == 5  # from the preset
    assert manifest["config"]["batch_size"] == 256
