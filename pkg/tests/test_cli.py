import json

import numpy as np
import pytest
import yaml

from ltl_transport import cli
from ltl_transport.ltl import synthesize
from ltl_transport.scenario import BUILTIN, load_scenario


def bundled(name):
    return yaml.safe_load((BUILTIN / f"{name}.yaml").read_text())


def dump(tmp_path, data, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def tiny():
    """One agent, no objects, two nearby regions; plans and simulates in seconds."""
    return {
        "name": "tiny",
        "workspace": {"center": [0, 0, 0], "radius": 6.0},
        "regions": [{"id": 1, "center": [-2.5, 0, 0.2], "radius": 1.0},
                    {"id": 2, "center": [2.5, 0, 0.2], "radius": 1.0}],
        "agents": [{"q": [-2.5, 0, 1.0], "labels": {1: ["home"], 2: ["away"]}, "formula": "<>away"}],
        "objects": [],
        "navigation": {"drive_force": 300.0},
    }


def test_validate_bundled(capsys):
    assert cli.main(["validate", "--scenario", "scenario1"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "3 agents, 1 objects, 4 regions" in out


def test_validate_reports_agent_outside_regions(tmp_path, capsys):
    data = bundled("scenario1")
    data["agents"][2]["q"] = [0.0, 0.0, 1.0]
    assert cli.main(["validate", "--scenario", dump(tmp_path, data)]) == cli.EXIT_INVALID
    assert "agent 2: not inside any region" in capsys.readouterr().out


def test_two_agents_in_one_region_rejected(tmp_path, capsys):
    data = bundled("scenario1")
    data["agents"][1]["q"] = [-3.6, -4.5, 1.0]
    code = cli.main(["plan", "--scenario", dump(tmp_path, data)])
    assert code == cli.EXIT_INVALID
    assert "share region 1" in capsys.readouterr().err


def test_missing_scenario_file(capsys):
    assert cli.main(["validate", "--scenario", "/nonexistent/x.yaml"]) == cli.EXIT_INVALID
    assert "not found" in capsys.readouterr().err


def test_missing_scenario_flag(capsys):
    assert cli.main(["plan"]) == cli.EXIT_INVALID


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("workspace: [unclosed\n")
    assert cli.main(["validate", "--scenario", str(p)]) == cli.EXIT_INVALID


def test_unknown_proposition_rejected(tmp_path, capsys):
    data = tiny()
    data["agents"][0]["formula"] = "<>nowhere"
    assert cli.main(["plan", "--scenario", dump(tmp_path, data)]) == cli.EXIT_INVALID
    assert "unknown propositions" in capsys.readouterr().err


def test_unsatisfiable_exit_code(tmp_path, capsys):
    data = tiny()
    data["agents"][0]["formula"] = "[]home && <>away"
    assert cli.main(["plan", "--scenario", dump(tmp_path, data)]) == cli.EXIT_UNSAT
    assert "unsatisfiable" in capsys.readouterr().err


def test_plan_file_round_trip(tmp_path):
    sc = load_scenario("scenario2")
    plan = synthesize(sc.transition_system(), sc.formula)
    path = tmp_path / "plan.json"
    cli.write_plan(plan, path, sc)
    assert cli.read_plan(path) == plan
    data = json.loads(path.read_text())
    assert data["scenario"] == "scenario2"
    assert len(data["agents"]) == 2 and len(data["objects"]) == 1
    cli.check_plan(plan, sc)


def test_plan_command_writes_json(tmp_path):
    out = tmp_path / "p.json"
    assert cli.main(["plan", "--scenario", "scenario2", "--out", str(out)]) == cli.EXIT_OK
    plan = cli.read_plan(out)
    assert plan.cycle


def test_check_plan_rejects_foreign_plan(tmp_path):
    sc1, sc2 = load_scenario("scenario1"), load_scenario("scenario2")
    plan = synthesize(sc2.transition_system(), sc2.formula)
    with pytest.raises(cli.InputError):
        cli.check_plan(plan, sc1)


def test_bad_plan_files(tmp_path):
    with pytest.raises(cli.InputError):
        cli.read_plan(tmp_path / "none.json")
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(cli.InputError):
        cli.read_plan(p)
    p.write_text(json.dumps({"prefix": []}))
    with pytest.raises(cli.InputError):
        cli.read_plan(p)
    p.write_text(json.dumps({"cycle": [{"agents": [1]}]}))
    with pytest.raises(cli.InputError):
        cli.read_plan(p)


def test_simulate_and_render(tmp_path):
    scenario = dump(tmp_path, tiny())
    traj = tmp_path / "run.csv"
    code = cli.main(["simulate", "--scenario", scenario, "--rounds", "0", "--out", str(traj)])
    assert code == cli.EXIT_OK
    report = traj.with_suffix(".report.txt").read_text()
    assert "logged word satisfies formula: True" in report
    assert "result: success" in report

    tracks = cli.read_trajectory(traj)
    assert set(tracks) == {("agent", 0)}
    t = tracks[("agent", 0)][:, 0]
    assert np.all(np.diff(t) >= 0)
    end = tracks[("agent", 0)][-1, 1:]
    assert np.hypot(end[0] - 2.5, end[1]) < 1.0

    svg = tmp_path / "run.svg"
    assert cli.main(["render", str(traj), "--scenario", scenario, "--out", str(svg)]) == cli.EXIT_OK
    text = svg.read_text()
    assert text.count("<polyline") == len(tracks)
    assert text.count('class="region"') == 2


def test_render_polyline_per_track(tmp_path):
    csv_path = tmp_path / "t.csv"
    rows = ["t,entity,id,c0,c1"]
    for k in range(3):
        rows += [f"{k * 0.1},agent,0,{k},0", f"{k * 0.1},agent,1,0,{k}", f"{k * 0.1},object,0,{k},{k}"]
    csv_path.write_text("\n".join(rows) + "\n")
    svg = cli.render_svg(load_scenario("scenario1"), cli.read_trajectory(csv_path))
    assert svg.count("<polyline") == 3
    assert svg.count('class="trajectory object"') == 1


def test_render_missing_columns(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(cli.InputError):
        cli.read_trajectory(p)
    assert cli.main(["render", str(tmp_path / "none.csv"), "--scenario", "scenario1"]) == cli.EXIT_INVALID


def test_dt_must_be_positive():
    assert cli.main(["plan", "--scenario", "scenario1", "--dt", "0"]) == cli.EXIT_INVALID
