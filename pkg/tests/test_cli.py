import json
import subprocess
import sys

import pytest

from bktlab.cli import parse_and_dispatch


def run(argv, capsys):
    code = parse_and_dispatch(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_duality_json(capsys):
    code, out, _ = run(["duality", "--L", "2", "--beta", "1", "--x", "0,0"], capsys)
    assert code == 0
    doc = json.loads(out)
    r = doc["result"]
    assert {"L", "beta", "x", "villain", "iv", "diff", "tolerances"} <= set(r)
    assert abs(r["diff"]) <= r["tolerances"]["tolerance"] == 1e-6 and doc["command"] == "duality" and len(doc["config_hash"]) == 16


def test_malformed_config_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"L": 2,\n "beta": }')
    code, _, err = run(["duality", "--config", str(bad)], capsys)
    assert code == 2 and "bad.json:2:" in err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"L": 2, "temperature": 3}))
    code, _, err = run(["duality", "--config", str(cfg)], capsys)
    assert code == 2 and "temperature" in err


def test_flags_override_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"L": 2, "beta": 3.0}))
    code, out, _ = run(["duality", "--config", str(cfg), "--beta", "0.5"], capsys)
    assert code == 0 and json.loads(out)["config"]["beta"] == 0.5


def test_precondition_is_exit_2(capsys):
    code, _, _ = run(["expand", "--L", "9"], capsys)
    assert code == 2


def test_out_dir_and_byte_identical(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BKTLAB_OUT_DIR", str(tmp_path / "a"))
    argv = ["sample", "--model", "iv", "--L", "3", "--steps", "300", "--seeds", "[0, 1]", "--chains", "2"]
    assert run(argv, capsys)[0] == 0
    monkeypatch.setenv("BKTLAB_OUT_DIR", str(tmp_path / "b"))
    assert run(argv + ["--threads", "3"], capsys)[0] == 0
    a, b = (tmp_path / d / "sample.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# bktlab")


@pytest.mark.parametrize("argv", [
    ["green", "--L", "6"],
    ["cover", "--density", '{"kind": "free", "L": 8, "charges": {"1,1": 1, "6,6": -1}}'],
    ["expand", "--L", "2", "--N", "1"],
    ["spinwave", "--density", '{"kind": "free", "L": 16, "charges": {"3,3": 1, "3,4": -1}}'],
    ["sample", "--model", "gff", "--L", "3", "--steps", "500"],
    ["sample", "--model", "villain", "--L", "3", "--steps", "200", "--burn-in", "50"],
])
def test_commands_run(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 0, err
    assert out


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "bktlab.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("bktlab ")


@pytest.mark.slow
def test_verify_identities_exit_zero(tmp_path, capsys):
    out = tmp_path / "v.json"
    code, _, err = run(["verify", "--suite", "identities", "--profile", "paper", "--seed", "7", "--out", str(out)], capsys)
    assert code == 0, err
    reports = json.loads(out.read_text())["result"]["checks"]
    assert reports and all(r["status"] in ("pass", "report-only") for r in reports)
    assert all("runtime" not in r for r in reports)
    assert json.loads(out.read_text())["result"]["failed"] == []
