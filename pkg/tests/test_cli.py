from __future__ import annotations

import json
import subprocess
import sys

import pytest

from did6g.cli import main
from did6g.scenarios import default_config

from oracles import chain_is_intact


@pytest.fixture
def cfg(tmp_path):
    def write(name: str, **adversary) -> str:
        data = default_config(name)
        data.setdefault("adversary", {}).update(adversary)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(data))
        return str(path)

    return write


def test_run_success_writes_report(cfg, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["run", "roaming", "--config", cfg("roaming"), "--seed", "42", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["outcome"] == {"status": "success"} and report["seed"] == 42
    assert "success" in capsys.readouterr().out


def test_run_failure_exit_two(cfg, tmp_path):
    out = tmp_path / "report.json"
    code = main(["run", "roaming", "--config", cfg("roaming", strangerKey=True), "--seed", "1", "--output", str(out)])
    assert code == 2
    assert json.loads(out.read_text())["outcome"]["reason"] == "BadOwnershipProof"


def test_state_out_and_inspect(cfg, tmp_path, capsys):
    out, state = tmp_path / "r.json", tmp_path / "ledger.jsonl"
    args = ["run", "nf-access", "--config", cfg("nf-access"), "--seed", "3", "--output", str(out)]
    assert main(args + ["--state-out", str(state)]) == 0
    assert chain_is_intact(state.read_bytes())
    capsys.readouterr()
    assert main(["ledger", "inspect", "--state", str(state)]) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [b["height"] for b in lines] == list(range(len(lines))) and len(lines) == 3


def test_sweep_through_cli(cfg, tmp_path):
    out = tmp_path / "sweep.json"
    assert main(["run", "consensus-sweep", "--config", cfg("consensus-sweep"), "--seed", "0", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["findings"]["smallestRewriteFraction"] == "0.667"


def test_inspect_rejects_corrupt_state(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_bytes(b"{not json}\n")
    assert main(["ledger", "inspect", "--state", str(bad)]) == 1
    assert main(["ledger", "inspect", "--state", str(tmp_path / "missing.jsonl")]) == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["run", "roaming"],
        ["run", "moon-landing", "--config", "x", "--seed", "1", "--output", "y"],
        ["run", "roaming", "--config", "x", "--seed", "-1", "--output", "y"],
        ["run", "roaming", "--config", "x", "--seed", str(2**64), "--output", "y"],
        ["run", "roaming", "--config", "x", "--seed", "abc", "--output", "y"],
        ["ledger"],
    ],
)
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_invalid_config_exit_one(tmp_path, capsys):
    out = tmp_path / "r.json"
    missing = tmp_path / "none.json"
    assert main(["run", "roaming", "--config", str(missing), "--seed", "1", "--output", str(out)]) == 1
    garbage = tmp_path / "garbage.json"
    garbage.write_text("[1, 2]")
    assert main(["run", "roaming", "--config", str(garbage), "--seed", "1", "--output", str(out)]) == 1
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"entities": [{"id": "x"}]}))
    assert main(["run", "roaming", "--config", str(wrong), "--seed", "1", "--output", str(out)]) == 1
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"entities": "abc"}))
    assert main(["run", "roaming", "--config", str(nested), "--seed", "1", "--output", str(out)]) == 1
    assert not out.exists()


def test_module_entry_point(cfg, tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "did6g", "run", "iot-onboarding", "--config", cfg("iot-onboarding"),
         "--seed", "9", "--output", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["scenario"] == "iot-onboarding"
