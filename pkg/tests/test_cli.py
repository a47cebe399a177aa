import csv
import json
import subprocess
import sys

import pytest

from lcwnet.cli import main


def _write_config(path, **over):
    raw = {"epochs": 1, "seed": 0,
           "model": {"depth": 3, "width": 16},
           "data": {"synthetic": {"classes": 3, "dim": 8, "samples_per_class": 40}}}
    raw.update(over)
    path.write_text(json.dumps(raw))
    return path


def test_verify_props_passes_with_json(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify-props", "--seed", "1", "--json", str(out)]) == 0
    verdicts = json.loads(out.read_text())
    assert verdicts["all_passed"] and all(v["passed"] for v in verdicts["verdicts"])
    assert "checks passed" in capsys.readouterr().out


def test_train_missing_dataset_path(tmp_path, capsys):
    missing = tmp_path / "no_cifar_here"
    cfg = _write_config(tmp_path / "c.json", data={"kind": "cifar10", "root": str(missing)})
    assert main(["train", str(cfg)]) == 3
    assert str(missing) in capsys.readouterr().err


def test_train_writes_artifacts(tmp_path):
    cfg = _write_config(tmp_path / "c.json")
    assert main(["train", str(cfg), "--out", str(tmp_path / "run")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "run/metrics.csv")))
    assert len(rows) == 1 and rows[0]["epoch"] == "0"
    assert (tmp_path / "run/model.ckpt").is_file()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", epochs=3, lr=1e6, momentum=0.0,
                        init="glorot_uniform",
                        model={"depth": 4, "width": 64, "activation": "relu", "lcw": False},
                        data={"synthetic": {"classes": 10, "dim": 128, "samples_per_class": 100}})
    assert main(["train", str(cfg)]) == 3
    assert "non-finite loss" in capsys.readouterr().err


def test_shift_demo_outputs(tmp_path):
    assert main(["shift-demo", "--seed", "0", "--out", str(tmp_path)]) == 0
    grid = list(csv.DictReader(open(tmp_path / "shift_grid.csv")))
    assert sum(1 for r in grid if r["matrix"] == "Z") == 100 * 100
    means = list(csv.DictReader(open(tmp_path / "shift_means.csv")))
    standard = [r for r in means if r["weights"] == "standard"]
    assert len(standard) == 100
    assert {"predicted_mean", "empirical_mean", "stderr"} <= set(standard[0])


def test_profile_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", model={"depth": 6, "width": 16})
    assert main(["profile", str(cfg), "--out", str(tmp_path / "p"), "--layers", "1,3"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "p/layer_profile.csv")))
    assert {int(r["layer"]) for r in rows} == set(range(1, 7))
    q = list(csv.DictReader(open(tmp_path / "p/activation_quantiles.csv")))
    assert {int(r["layer"]) for r in q} == {1, 3}
    assert "V(grad z^1)" in capsys.readouterr().out


def test_gradcheck_command(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gradcheck", "--seeds", "1", "--json", str(out)]) == 0
    assert json.loads(out.read_text())["all_passed"]


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["train"], ["verify-props", "--seed", "x"]])
def test_usage_errors(argv):
    assert main(argv) == 1


def test_bad_config_is_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epochs": 1, "mystery": 2}))
    assert main(["train", str(bad)]) == 1
    assert main(["train", str(tmp_path / "absent.json")]) == 1


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lcwnet", "frobnicate"], capture_output=True)
    assert proc.returncode == 1
