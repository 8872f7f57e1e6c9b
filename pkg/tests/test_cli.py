import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from holobeam.cli import main, parse_scenario, ScenarioError

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

BEAM = {
    "schema": 1,
    "kind": "beampattern",
    "seed": 0,
    "output_dir": "out",
    "rhs": {"rows": 1, "cols": 12, "element_spacing": 0.01 / 3, "wavelength": 0.01},
    "beampattern": {"directions_deg": [[60.0, 0.0]], "grid": {"theta_deg": [0.0, 180.0, 37], "phi_deg": 0.0}},
}

PARETO = {
    "schema": 1,
    "kind": "pareto",
    "output_dir": "out",
    "rhs": {"rows": 1, "cols": 20, "element_spacing": 0.01 / 3, "wavelength": 0.01},
    "pareto": {
        "targets_deg": [-20.0],
        "comm_paths": [{"angle_deg": 30.0, "gain": 1.0}],
        "thresholds_db": [0.0, 10.0],
        "restarts": 2,
    },
}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


@pytest.fixture(autouse=True)
def _cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def test_unknown_kind_exits_2(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, {**BEAM, "kind": "hologram"}))]) == 2
    assert "unknown kind" in capsys.readouterr().err


def test_parse_error_reports_position(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, '{"schema": 1,\n  "kind": }'))]) == 2
    assert "line 2, column" in capsys.readouterr().err


def test_unknown_field_and_schema_rejected(tmp_path):
    with pytest.raises(ScenarioError):
        parse_scenario(json.dumps({**BEAM, "extra": 1}))
    with pytest.raises(ScenarioError, match="schema"):
        parse_scenario(json.dumps({**BEAM, "schema": 2}))
    bad_rhs = {**BEAM, "rhs": {**BEAM["rhs"], "cols": "twelve"}}
    assert main(["run", str(write(tmp_path, bad_rhs))]) == 2


def test_missing_file_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == 2


def test_validate_does_not_write(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, BEAM))]) == 0
    assert "ok" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_shipped_scenarios_validate():
    files = sorted(SCEN.glob("*.json"))
    assert len(files) == 7
    for f in files:
        assert main(["validate", str(f)]) == 0


def test_run_is_deterministic(tmp_path):
    s = write(tmp_path, BEAM)
    assert main(["run", str(s), "--out", "a"]) == 0
    assert main(["run", str(s), "--out", "b"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"]
    assert ma["scenario_sha256"] == mb["scenario_sha256"]
    assert {f["name"] for f in ma["files"]} == {"beampattern.csv", "pattern.json"}
    assert len((tmp_path / "a" / "beampattern.csv").read_text().splitlines()) == 1 + 37


def test_output_dir_is_relative_to_cwd(tmp_path):
    assert main(["run", str(write(tmp_path, BEAM))]) == 0
    assert (tmp_path / "out" / "manifest.json").exists()


def test_pareto_rows_one_per_threshold(tmp_path):
    assert main(["run", str(write(tmp_path, PARETO))]) == 0
    rows = (tmp_path / "out" / "pareto.csv").read_text().splitlines()
    assert rows[0] == "gamma_c_db,p_s_w"
    assert len(rows) == 3
    powers = [float(r.split(",")[1]) for r in rows[1:]]
    assert powers[0] >= powers[1] > 0


def test_unreachable_threshold_exits_3_with_report(tmp_path):
    doc = json.loads(json.dumps(PARETO))
    doc["pareto"]["thresholds_db"] = [0.0, 80.0]
    assert main(["run", str(write(tmp_path, doc))]) == 3
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["status"] == "infeasible"
    for f in man["files"]:
        assert (tmp_path / "out" / f["name"]).exists()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["infeasible_thresholds_db"] == [80.0]


def test_bad_thread_count_exits_2(tmp_path):
    s = write(tmp_path, BEAM)
    env = {**os.environ, "HOLOBEAM_THREADS": "zero"}
    r = subprocess.run([sys.executable, "-m", "holobeam.cli", "validate", str(s)], env=env, capture_output=True, text=True)
    assert r.returncode == 2
    assert "HOLOBEAM_THREADS" in r.stderr
    env["HOLOBEAM_THREADS"] = "2"
    r = subprocess.run([sys.executable, "-m", "holobeam.cli", "validate", str(s)], env=env, capture_output=True, text=True)
    assert r.returncode == 0
