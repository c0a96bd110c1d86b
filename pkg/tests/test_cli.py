import csv
import json
import subprocess
import sys

import pytest
import yaml

from courtplan.cli import add_dummy_vehicles, main, parse_sweep, UsageError
from courtplan.scenario import scenario_to_dict
from conftest import bundled, straight_doc


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_outputs(tmp_path, capsys):
    code, out, _ = run_cli(["run", "scenario1", "--out", str(tmp_path), "--duration", "3"], capsys)
    assert code == 0
    assert "scenario1: merge=" in out
    for suffix in (".csv", ".json", "_st.png", "_v.png", "_a.png"):
        assert (tmp_path / f"scenario1{suffix}").is_file()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary[0]["scenario"] == "scenario1" and summary[0]["ticks"] == 16


def test_no_plots(tmp_path, capsys):
    code, _, _ = run_cli(["run", "scenario1", "--out", str(tmp_path), "--duration", "1", "--no-plots"], capsys)
    assert code == 0
    assert not list(tmp_path.glob("*.png"))


def test_csv_parses_back(tmp_path, capsys):
    run_cli(["run", "scenario3", "--out", str(tmp_path), "--duration", "2", "--no-plots"], capsys)
    with open(tmp_path / "scenario3.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    assert float(rows[0]["ego_v"]) == bundled("scenario3").ego.v
    assert {"veh2_s", "veh3_s"} <= set(rows[0])
    times = [float(r["sim_t"]) for r in rows]
    assert times == pytest.approx([0.2 * k for k in range(11)])


def test_sweep(tmp_path, capsys):
    code, out, _ = run_cli(["run", "scenario1", "--out", str(tmp_path), "--no-plots",
                            "--sweep-weight", "inter=20,50"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2
    assert "merge=ego-first" in lines[0] and "merge=other-first" in lines[1]
    assert (tmp_path / "scenario1_inter=20.csv").is_file()


def test_dummy_vehicles(tmp_path, capsys):
    code, out, _ = run_cli(["run", "scenario1", "--out", str(tmp_path), "--duration", "1", "--no-plots",
                            "--dummy-vehicles", "3", "--seed", "4"], capsys)
    assert code == 0 and "vehicles=5" in out
    sc = add_dummy_vehicles(bundled("scenario1"), 3, 4)
    again = add_dummy_vehicles(bundled("scenario1"), 3, 4)
    assert sc == again
    assert [o.id for o in sc.others] == ["2", "d1", "d2", "d3"]
    assert all(500 <= o.s <= 2000 and 3 <= o.v <= 8 for o in sc.others[1:])
    assert add_dummy_vehicles(bundled("scenario1"), 0, 4) is bundled("scenario1")


def test_replan_hz(tmp_path, capsys):
    run_cli(["run", "scenario1", "--out", str(tmp_path), "--duration", "1", "--no-plots", "--replan-hz", "10"], capsys)
    data = json.loads((tmp_path / "scenario1.json").read_text())
    assert data["tick_dt"] == pytest.approx(0.1) and len(data["ticks"]) == 11


def test_verify_bundled(capsys):
    code, out, _ = run_cli(["verify", "scenario3"], capsys)
    assert code == 0
    assert out.startswith("OK bundled:scenario3")
    assert "vehicle 3: 3.000, 5.800, 18.000, 28.000" in out
    assert "speed limit profile" in out
    assert "warning" not in out


def test_verify_warns_on_slow_limit(tmp_path, capsys):
    doc = straight_doc(ego_v=9.0)
    doc["paths"][0]["samples"] = [[0.0, 0.0, 10.0], [50.0, 0.0, 5.0], [300.0, 0.0, 5.0]]
    path = tmp_path / "slow.yaml"
    path.write_text(yaml.safe_dump(doc))
    code, out, _ = run_cli(["verify", str(path)], capsys)
    assert code == 0
    assert "warning: v_max" in out and "(none)" in out


def test_verify_no_constraint_note(tmp_path, capsys):
    doc = scenario_to_dict(bundled("scenario3"))
    for v in doc["vehicles"]:
        if v["id"] == "3":
            v["s"] = 100.0  # already past the zone
    path = tmp_path / "past.yaml"
    path.write_text(yaml.safe_dump(doc))
    _, out, _ = run_cli(["verify", str(path)], capsys)
    assert "vehicle 3: no constraint derived" in out


def test_invalid_scenario_error_json(tmp_path, capsys):
    doc = straight_doc()
    doc["vehicles"][0]["v"] = -2.0
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(doc))
    code, _, err = run_cli(["verify", str(path)], capsys)
    assert code == 2
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["error"] == "scenario" and rec["locus"] == "vehicles[0].v"


def test_missing_file(capsys):
    code, _, err = run_cli(["run", "/nonexistent/x.yaml"], capsys)
    assert code == 3
    assert json.loads(err)["error"] == "io"


def test_bad_sweep(tmp_path, capsys):
    code, _, err = run_cli(["run", "scenario1", "--out", str(tmp_path), "--sweep-weight", "speed=1"], capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"
    assert parse_sweep("inter=1,2.5") == ("inter", [1.0, 2.5])
    with pytest.raises(UsageError):
        parse_sweep("inter=-1")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "courtplan.cli", "verify", "scenario1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("OK")
