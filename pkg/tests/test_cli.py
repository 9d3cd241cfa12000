import json
from pathlib import Path

import pandas as pd

import hermflow
from hermflow import cli, io

PRESETS = Path(__file__).resolve().parent.parent / "presets"


def test_identities_command_passes(tmp_path, capsys):
    code = cli.main(["identities", "--only", "lambda_pairing", "--dims", "2,3", "--seeds", "2", "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["success"]
    assert "✅" in capsys.readouterr().out
    lines = (tmp_path / "identities.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2 * (2 + 3)
    assert all(json.loads(line)["passed"] for line in lines)


def test_identities_command_reports_failure(tmp_path):
    code = cli.main(["identities", "--only", "lambda_pairing", "--dims", "2", "--seeds", "1", "--tol", "1e-30", "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["failure"]


def test_identities_command_rejects_unknown_key(tmp_path):
    result = cli.main_function(["identities", "--only", "nope", "--out", str(tmp_path)])
    assert result["status"] == "config_error"
    assert cli.main(["identities", "--dims", "two", "--out", str(tmp_path)]) == cli.EXIT_CODES["config_error"]


def test_flow_command_writes_outputs(tmp_path):
    code = cli.main(["flow", "--config", str(PRESETS / "flat_stationary.cfg"), "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["success"]
    df = pd.read_csv(tmp_path / "diagnostics.csv")
    assert len(df) == 21
    assert (df["maxT2"] == 0).all()
    field, omega_c = io.read_snapshot(tmp_path / "final.snapshot")
    assert field.lattice.m == 2 and omega_c == 1.0
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["halt_reason"] == "completed"
    assert manifest["summary"]["plateau_start"] is None


def test_flow_command_with_monitors(tmp_path):
    code = cli.main(["flow", "--config", str(PRESETS / "torsion_flow_m2.cfg"), "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["success"]
    df = pd.read_csv(tmp_path / "diagnostics.csv")
    assert {"torsionFlowRes", "tsqRes"} <= set(df.columns)
    assert df["torsionFlowRes"].isna().tolist() == [True] + [False] * (len(df) - 2) + [True]
    summary = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))["summary"]
    assert summary["tsq_fitted_C"] >= 0.0


def test_flow_command_reports_halt(tmp_path, capsys):
    config = tmp_path / "big_step.cfg"
    config.write_text("m = 2\nn = 10\ndt = 1.0\nsteps = 3\n", encoding="utf-8")
    code = cli.main(["flow", "--config", str(config), "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["halted"]
    assert "CFL" in capsys.readouterr().out
    assert len(pd.read_csv(tmp_path / "diagnostics.csv")) == 1


def test_flow_command_rejects_bad_config(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text("m = 2\nscheme = leapfrog\n", encoding="utf-8")
    assert cli.main(["flow", "--config", str(config), "--out", str(tmp_path)]) == cli.EXIT_CODES["config_error"]
    assert cli.main(["flow", "--config", str(tmp_path / "absent.cfg")]) == cli.EXIT_CODES["config_error"]


def test_make_balanced_writes_snapshot(tmp_path):
    code = cli.main(["make-balanced", "--m", "3", "--n", "16", "--seed", "2", "--out", str(tmp_path)])
    assert code == cli.EXIT_CODES["success"]
    field, _ = io.read_snapshot(tmp_path / "balanced_m3_n16_seed2.snapshot")
    assert field.tag == "balanced"


def test_make_balanced_refuses_dimension_two(tmp_path):
    assert cli.main(["make-balanced", "--m", "2", "--out", str(tmp_path)]) == cli.EXIT_CODES["config_error"]


def test_bad_command_line():
    assert cli.main(["no-such-command"]) == cli.EXIT_CODES["config_error"]


def test_flow_command_fails_when_a_tolerance_is_exceeded(tmp_path, capsys):
    config = tmp_path / "strict.cfg"
    text = (PRESETS / "torsion_flow_m2.cfg").read_text(encoding="utf-8")
    config.write_text(text + "tolerances.torsion_flow = 1e-14\n", encoding="utf-8")
    out = tmp_path / "run"
    assert cli.main(["flow", "--config", str(config), "--out", str(out)]) == cli.EXIT_CODES["failure"]
    assert "torsionFlowRes" in capsys.readouterr().out
    summary = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["summary"]
    assert summary["failures"] and summary["failures"][0].startswith("torsionFlowRes")


def test_flow_manifest_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert cli.main(["flow", "--config", str(PRESETS / "flat_stationary.cfg"), "--out", str(out)]) == 0
    manifest = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["version"] == hermflow.__version__
    assert manifest["seed"] == 0
    assert manifest["output_dir"] == str(first)
    assert manifest["config_path"].endswith("flat_stationary.cfg")
    assert "started" not in manifest
    for name in ("diagnostics.csv", "final.snapshot"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a", "b"]


def test_every_command_writes_a_manifest(tmp_path):
    cli.main(["identities", "--only", "lambda_pairing", "--dims", "2", "--seeds", "1", "--out", str(tmp_path / "ids")])
    cli.main(["make-balanced", "--m", "3", "--n", "16", "--seed", "4", "--out", str(tmp_path / "bal")])
    ids = json.loads((tmp_path / "ids" / "manifest.json").read_text(encoding="utf-8"))
    bal = json.loads((tmp_path / "bal" / "manifest.json").read_text(encoding="utf-8"))
    assert ids["command"] == "identities" and ids["config"]["seeds"] == 1
    assert bal["command"] == "make-balanced" and bal["seed"] == 4
    assert bal["files"][0] == "balanced_m3_n16_seed4.snapshot"


def test_failed_command_leaves_no_staging_directory(tmp_path):
    out = tmp_path / "never"
    assert cli.main(["identities", "--only", "nope", "--out", str(out)]) == cli.EXIT_CODES["config_error"]
    assert list(tmp_path.iterdir()) == []
