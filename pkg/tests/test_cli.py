import csv
import json
import os
import subprocess
import sys

import pytest

from ossync import cli, scenario
from ossync.exceptions import ScenarioError


def bundled_doc():
    with open(scenario.bundled_path()) as fh:
        return json.load(fh)


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    scen = scenario.bundled_path()
    codes = {cmd: cli.main([cmd, "--scenario", scen, "--out", str(out)])
             for cmd in ("design", "simulate", "verify", "report")}
    return out, codes


def test_pipeline_succeeds(pipeline):
    out, codes = pipeline
    assert codes == {"design": 0, "simulate": 0, "verify": 0, "report": 0}
    for name in ("designs.json", "design_summary.csv", "trace.csv", "energy.csv", "sync.csv",
                 "verify.csv", "report.md", "path_agent2.csv", "path_agent5.csv"):
        assert (out / name).exists()
    assert not list(out.glob("*.svg"))


def test_designs_follow_strategy_tags(pipeline):
    out, _ = pipeline
    summary = {r["agent"]: r["strategy"] for r in rows(out / "design_summary.csv")}
    assert summary == {"agent1": "EXS", "agent2": "EBOSS", "agent3": "EXS", "agent4": "OSS",
                       "agent5": "EBOSS"}


def test_verify_table(pipeline):
    out, _ = pipeline
    checks = rows(out / "verify.csv")
    assert all(r["result"] == "PASS" for r in checks)
    exs = [r for r in checks if r["check"].startswith("stationary_error") and r["agent"] in ("agent1", "agent3")]
    assert len(exs) == 4 and all(float(r["value"]) <= 1e-6 for r in exs)
    order = [r for r in checks if r["check"] == "energy_ordering"]
    assert order and order[0]["agent"] == "agent3>agent5>agent4"


def test_report_numbers_come_from_csv(pipeline):
    out, _ = pipeline
    report = (out / "report.md").read_text()
    for name in ("energy.csv", "design_summary.csv", "verify.csv", "sync.csv"):
        for r in rows(out / name):
            for key, val in r.items():
                if val and key != "Q":
                    assert val in report, (name, key, val)


def test_round_trip_is_bit_identical(pipeline, tmp_path):
    out, _ = pipeline
    scen = scenario.bundled_path()
    for cmd in ("design", "simulate", "verify"):
        assert cli.main([cmd, "--scenario", scen, "--out", str(tmp_path)]) == 0
    for name in ("designs.json", "energy.csv", "verify.csv", "trace.csv", "path_agent5.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_report_with_plots(pipeline, tmp_path):
    pytest.importorskip("matplotlib")
    out, _ = pipeline
    for name in ("designs.json", "design_summary.csv", "energy.csv", "sync.csv", "verify.csv", "trace.csv"):
        (tmp_path / name).write_bytes((out / name).read_bytes())
    assert cli.main(["report", "--scenario", scenario.bundled_path(), "--out", str(tmp_path), "--plots"]) == 0
    assert (tmp_path / "sync_errors.svg").exists() and (tmp_path / "energy.svg").exists()


def test_empty_agent_list(tmp_path):
    doc = bundled_doc()
    doc["agents"] = []
    assert cli.main(["design", "--scenario", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1


def test_unknown_key_rejected(tmp_path):
    doc = bundled_doc()
    doc["agents"][0]["gain"] = 3
    with pytest.raises(ScenarioError, match="unknown key"):
        scenario.load(write(tmp_path, doc))
    doc = bundled_doc()
    doc["extra"] = {}
    assert cli.main(["design", "--scenario", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d["agents"][3].pop("Q"), "OSS needs Q"),
    (lambda d: d["agents"][0].update(eps=[1.0, 1.0]), "only used by EBOSS"),
    (lambda d: d["agents"][0].update(A=[[1.0, 2.0], [3.0]]), "rows have different lengths"),
    (lambda d: d["simulation"]["exo_offsets"][0].__setitem__(0, 9.0), "sum to zero"),
    (lambda d: d["graph"].update(edges=[[1, 1]]), "self-loop"),
])
def test_scenario_validation(tmp_path, mutate, match):
    doc = bundled_doc()
    mutate(doc)
    with pytest.raises(ScenarioError, match=match):
        scenario.load(write(tmp_path, doc))


def test_missing_artifacts(tmp_path):
    scen = scenario.bundled_path()
    for cmd in ("simulate", "verify", "report"):
        assert cli.main([cmd, "--scenario", scen, "--out", str(tmp_path / cmd)]) == 1


def test_infeasible_bounds_exit_2(tmp_path, capsys):
    doc = bundled_doc()
    doc["agents"] = [doc["agents"][4]]
    doc["graph"] = {"N": 1, "edges": []}
    doc["simulation"].pop("exo_offsets")
    doc.pop("expectations")
    doc["agents"][0]["eps"] = [0.1, 0.1]
    assert cli.main(["design", "--scenario", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2
    assert "agent5" in capsys.readouterr().err


def test_bad_arguments():
    assert cli.main(["explode", "--scenario", "x", "--out", "y"]) == 1
    assert cli.main(["design"]) == 1


def test_module_entry_point_and_log_level(tmp_path):
    env = dict(os.environ, OSSYNC_LOG="DEBUG")
    proc = subprocess.run([sys.executable, "-m", "ossync", "simulate", "--scenario",
                           scenario.bundled_path(), "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 1
    assert "designs.json" in proc.stderr
