import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from bsdelab.cli import main

FAST = {
    "ensemble": {"steps": 20, "paths": 1000, "d": 2, "m": 2, "seed": 3},
    "ladder": [2, 4, 8],
    "probes": {"moduli": 300, "distance": 200, "seed": 1},
    "envelope": {"steps": 200, "regularize_k": [2.0, 10.0], "vanish": {"gammas": [1e-2, 1e-4],
                                                                       "epsilons": [1e-2, 1e-4]}},
    "decompose": {"steps": 256, "paths": 20},
}

pytestmark = pytest.mark.filterwarnings("ignore:step\\*L")


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _run(tmp_path, command, cfg=FAST, out="out", extra=()):
    return main([command, "--config", _write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


def _hashes(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("command,files", [
    ("solve", {"config.yaml", "solution.csv", "summary.json"}),
    ("converge", {"config.yaml", "d_y.csv", "d_y_l1.csv", "d_z.csv", "dominators.csv", "mollification.csv",
                  "stages.csv", "step1.csv", "summary.json"}),
    ("decompose", {"config.yaml", "coverage.csv", "segments.csv", "summary.json"}),
    ("girsanov", {"config.yaml", "density.csv", "summary.json", "windows.csv"}),
])
def test_commands_pass_and_write(tmp_path, capsys, command, files):
    assert _run(tmp_path, command) == 0
    assert {p.name for p in (tmp_path / "out").iterdir()} == files
    text = capsys.readouterr().out
    assert "# seed: 3" in text and "ladder:" in text
    assert "FAIL" not in text


def test_envelope_reports_osgood_vanish_failure(tmp_path, capsys):
    # at gamma = eps = 1e-4 the osgood solution is still far above the threshold
    assert _run(tmp_path, "envelope") == 1
    assert "FAIL vanish_below_threshold" in capsys.readouterr().out
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["invariants"]["vanish_below_threshold"] is False
    assert all(v for k, v in summary["invariants"].items() if k != "vanish_below_threshold")


def test_envelope_passes_with_lipschitz_modulus(tmp_path):
    cfg = dict(FAST, envelope=dict(FAST["envelope"], phi={"name": "identity"}, regularize_k=[2.0, 10.0]))
    assert _run(tmp_path, "envelope", cfg) == 0


def test_config_echo_round_trips(tmp_path):
    _run(tmp_path, "decompose")
    echoed = yaml.safe_load((tmp_path / "out" / "config.yaml").read_text())
    assert echoed["ensemble"]["seed"] == 3
    assert echoed["decompose"]["steps"] == 256


def test_seed_override(tmp_path):
    _run(tmp_path, "decompose", extra=("--seed", "99"))
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["seed"] == 99


@pytest.mark.parametrize("command", ["solve", "envelope", "decompose", "girsanov"])
def test_reruns_byte_identical(tmp_path, monkeypatch, command):
    # same relative output dir from two working dirs, so the echoed config matches too
    cfg = _write(tmp_path, FAST)
    for run in ("a", "b"):
        (tmp_path / run).mkdir()
        monkeypatch.chdir(tmp_path / run)
        assert main([command, "--config", cfg, "--out", "out"]) in (0, 1)
    assert _hashes(tmp_path / "a" / "out") == _hashes(tmp_path / "b" / "out")


def test_bad_config_exit_code(tmp_path):
    assert _run(tmp_path, "solve", dict(FAST, ladder=[4, 2])) == 2


def test_failed_invariant_exit_code(tmp_path):
    cfg = dict(FAST, decompose=dict(FAST["decompose"], coverage_tol=0.0, levels=[0.5]))
    assert _run(tmp_path, "decompose", cfg) == 1


def test_console_script_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "bsdelab.cli", "decompose", "--config", _write(tmp_path, FAST),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("# seed: 3\n")
