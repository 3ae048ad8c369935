import json
import subprocess
import sys

import pytest

from vipguard.cli import main
from vipguard.config import WorldConfig, save_config

SMALL = ["train_episodes=2", "eval_episodes=2", "eval_interval=1", "batch_size=8", "warmup_batches=1",
         "hidden_sizes=[8]"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def overrides():
    return [x for o in SMALL for x in ("--override", o)]


def test_train_then_eval_then_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    save_config(WorldConfig(seed=5), cfg_path)
    code, out, _ = run(capsys, "train", "--config", str(cfg_path), *overrides(), "--out", str(tmp_path / "run"))
    assert code == 0
    info = json.loads(out)
    assert info["seed"] == 5 and info["episodes"] == 2
    assert (tmp_path / "run" / "checkpoint" / "manifest.json").exists()

    code, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "run" / "checkpoint"), "--episodes", "3",
                       "--out", str(tmp_path / "ev.csv"))
    assert code == 0
    assert json.loads(out)["episodes"] == 3
    assert len((tmp_path / "ev.csv").read_text().splitlines()) == 4

    code, out, _ = run(capsys, "report", "--in", str(tmp_path / "run"), "--out", str(tmp_path / "rep"))
    assert code == 0
    assert json.loads(out)["inputs"] == 1
    assert (tmp_path / "rep" / "summary.csv").exists()


def test_sweep_command(tmp_path, capsys):
    spec = {"base": {"train_episodes": 1, "eval_episodes": 1, "batch_size": 8, "warmup_batches": 1,
                     "hidden_sizes": [8]},
            "axes": {"reward_kind": ["threat_only", "comm_penalty"]}, "seeds": [0, 1],
            "output_dir": str(tmp_path / "sweep")}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    code, out, _ = run(capsys, "sweep", "--spec", str(tmp_path / "spec.json"), "--jobs", "1")
    assert code == 0
    assert json.loads(out)["points"] == 4
    assert (tmp_path / "sweep" / "report" / "reward_ordering.csv").exists()


@pytest.mark.parametrize("argv,kind", [
    (["train", "--override", "gamma=2"], "ConfigError"),
    (["train", "--override", "bogus=1"], "ConfigError"),
    (["train", "--config", "/nonexistent.json"], "FileNotFoundError"),
    (["eval", "--checkpoint", "/nonexistent", "--episodes", "1"], "FileNotFoundError"),
    (["report", "--in", "/nonexistent", "--out", "/tmp/x"], "FileNotFoundError"),
    (["frobnicate"], "CliError"),
    (["eval", "--episodes", "1"], "CliError"),
])
def test_failures_emit_one_json_line(capsys, argv, kind):
    code, out, err = run(capsys, *argv)
    assert code != 0 and out == ""
    lines = err.strip().splitlines()
    payload = json.loads(lines[-1])
    assert payload["error"] == kind
    if kind == "ConfigError":
        assert payload["field"] in ("gamma", "bogus")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vipguard", "train", "--override", "gamma=-1"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["field"] == "gamma"
