import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from coaplan.cli import main

CYCLE_KB = """
schema_version: 1
segment: {id: base, shadows: base}
templates:
  - task: spin
    row: maneuver
    duration: {model: fixed, minutes: 10}
methods:
  - id: loop
    task: spin
    guard: {}
    subtasks:
      - {local: again, task: spin}
"""


@pytest.fixture()
def runner():
    return CliRunner()


def paths(data_dir):
    return (str(data_dir / "scenario_brigade.yaml"), str(data_dir / "kb_base.yaml"))


def test_plan_exit_zero_with_summary(runner, data_dir, tmp_path):
    scenario, kb = paths(data_dir)
    out = tmp_path / "plan.json"
    result = runner.invoke(main, ["plan", "--scenario", scenario, "--kb", kb,
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "leaf activities" in result.output
    leaves = int(result.output.split("plan: ")[1].split(" leaf")[0])
    assert leaves >= 100
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1


def test_missing_file_exit_2_names_path(runner, data_dir):
    result = runner.invoke(main, ["plan", "--scenario", "/nonexistent/s.yaml",
                                  "--kb", str(data_dir / "kb_base.yaml")])
    assert result.exit_code == 2
    assert "/nonexistent/s.yaml" in result.output


def test_matrix_csv_output(runner, data_dir, tmp_path):
    scenario, kb = paths(data_dir)
    out = tmp_path / "matrix.csv"
    result = runner.invoke(main, ["plan", "--scenario", scenario, "--kb", kb,
                                  "--format", "matrix_csv", "--period", "120",
                                  "--out", str(out)])
    assert result.exit_code == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith('"BOS","H+0:00","H+2:00"')


def test_kb_lint_clean_exit_zero(runner, data_dir):
    result = runner.invoke(main, ["kb", "lint", "--kb", str(data_dir / "kb_base.yaml"),
                                  "--kb", str(data_dir / "kb_overlay_nb.yaml")])
    assert result.exit_code == 0, result.output


def test_kb_lint_cycle_exit_two(runner, tmp_path):
    bad = tmp_path / "cycle.yaml"
    bad.write_text(CYCLE_KB)
    result = runner.invoke(main, ["kb", "lint", "--kb", str(bad)])
    assert result.exit_code == 2
    assert "infinite expansion" in result.output


def test_validate_clean(runner, data_dir):
    result = runner.invoke(main, ["validate", "--scenario",
                                  str(data_dir / "scenario_valley.yaml")])
    assert result.exit_code == 0


def test_validate_contradiction_exit_two(runner, tmp_path):
    doc = """
schema_version: 1
terrain:
  nodes: [{id: A, x: 0, y: 0}]
  edges: []
units:
  - {id: U1, allegiance: friendly, speed_kmh: 10, combat_power: 1, location: A}
goals:
  - {id: G1, task: move, executor: U1,
     relations: [{goal: G2, relation: starts_after_end_of, offset_min: 5}]}
  - {id: G2, task: move, executor: U1,
     relations: [{goal: G1, relation: starts_after_end_of, offset_min: 5}]}
"""
    f = tmp_path / "bad.yaml"
    f.write_text(doc)
    result = runner.invoke(main, ["validate", "--scenario", str(f)])
    assert result.exit_code == 2
    assert "temporal contradiction" in result.output


def test_determinism_two_runs_byte_identical(runner, data_dir, tmp_path):
    scenario, kb = paths(data_dir)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.json"
        result = runner.invoke(main, ["plan", "--scenario", scenario, "--kb", kb,
                                      "--out", str(out)])
        assert result.exit_code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_wargame_empty_enemy_matches_plan(runner, data_dir, tmp_path):
    # strip the enemy goal from the valley scenario: wargame == plan
    import yaml as _yaml
    d = _yaml.safe_load((data_dir / "scenario_valley.yaml").read_text())
    d["goals"] = [g for g in d["goals"] if g["id"] != "GR1-ATTACK"]
    f = tmp_path / "blue_only.yaml"
    f.write_text(_yaml.safe_dump(d))
    kb = str(data_dir / "kb_base.yaml")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert runner.invoke(main, ["wargame", "--scenario", str(f), "--kb", kb,
                                "--out", str(a)]).exit_code == 0
    assert runner.invoke(main, ["plan", "--scenario", str(f), "--kb", kb,
                                "--out", str(b)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_hard_failure_exit_three(runner, tmp_path, data_dir):
    # disconnected destination forces a routing failure: exit 3
    doc = """
schema_version: 1
terrain:
  nodes:
    - {id: A, x: 0, y: 0}
    - {id: B, x: 10, y: 0}
  edges: []
units:
  - {id: U1, allegiance: friendly, speed_kmh: 20, combat_power: 5, location: A,
     capabilities: [maneuver]}
goals:
  - {id: G1, task: move, executor: U1, target: DEST}
control_measures:
  - {id: DEST, kind: position, nodes: [B]}
"""
    f = tmp_path / "disconnected.yaml"
    f.write_text(doc)
    result = runner.invoke(main, ["plan", "--scenario", str(f),
                                  "--kb", str(data_dir / "kb_base.yaml")])
    assert result.exit_code == 3
    assert "planning failed" in result.output
