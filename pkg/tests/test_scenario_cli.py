import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gmfusion import ScenarioParseError, ScenarioValidationError
from gmfusion.cli import EXIT_DEGENERATE, EXIT_INVALID, EXIT_OK, main
from gmfusion.episode import derive_seed, emit_outputs, run_episode
from gmfusion.scenario import (
    golden_path,
    load_scenario,
    parse_scenario_text,
    scenario_from_dict,
    write_scenario,
)


def _golden_dict(name):
    return json.loads(golden_path(name).read_text())


def test_golden_table1_loads():
    s = load_scenario(golden_path("table1"))
    assert s.mode == "homogeneous" and len(s.sensors) == 3
    assert s.sensor_graph().sorted_edges() == [(0, 1), (1, 2)]
    assert len(s.mixture(0)) == 3


def test_golden_table2_loads():
    s = load_scenario(golden_path("table2"))
    assert s.mode == "heterogeneous"
    assert [len(s.mixture(k)) for k in (0, 1)] == [2, 3]


def test_unknown_golden_name():
    with pytest.raises(KeyError):
        golden_path("table3")


def test_weights_not_summing_to_one_names_mixture():
    data = _golden_dict("table1")
    data["priors"][0][2]["weight"] = 0.234
    with pytest.raises(ScenarioValidationError, match=r"priors\[0\]: weights sum to 0\.9"):
        scenario_from_dict(data)


def test_heterogeneous_needs_two_priors():
    data = _golden_dict("table2")
    data["priors"].append(data["priors"][0])
    with pytest.raises(ScenarioValidationError, match="exactly 2 priors"):
        scenario_from_dict(data)


def test_all_problems_reported_together():
    data = _golden_dict("table1")
    data["priors"][0][0]["weight"] = 0.5
    data["sensors"][1]["noise_var"] = -1.0
    data["consensus"]["tol"] = 0.0
    with pytest.raises(ScenarioValidationError) as info:
        scenario_from_dict(data)
    assert len(info.value.problems) >= 3


def test_sensor_on_truth_rejected():
    data = _golden_dict("table1")
    data["sensors"][0]["position"] = data["truth"]
    with pytest.raises(ScenarioValidationError, match="coincides with truth"):
        scenario_from_dict(data)


def test_parse_error_reports_location():
    with pytest.raises(ScenarioParseError, match=r"x\.scenario:2:11"):
        parse_scenario_text('{\n  "mode": , \n}', "x.scenario")


def test_round_trip(tmp_path):
    s = load_scenario(golden_path("table1"))
    assert load_scenario(write_scenario(s, tmp_path / "copy.scenario")) == s
    h = load_scenario(golden_path("table2"))
    assert load_scenario(write_scenario(h, tmp_path / "h.scenario")) == h


def test_derive_seed_streams_differ():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    assert len({derive_seed(1, 0), derive_seed(1, 1, 0), derive_seed(1, 1, 1), derive_seed(2, 0)}) == 4


def test_episode_outputs_deterministic(tmp_path):
    for name in ("table1", "table2"):
        s = load_scenario(golden_path(name))
        a = emit_outputs(run_episode(s), tmp_path / f"{name}-a")
        b = emit_outputs(run_episode(s), tmp_path / f"{name}-b")
        assert [p.name for p in a] == [p.name for p in b]
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()


def test_seed_changes_particles_not_hash_inputs(tmp_path):
    s = load_scenario(golden_path("table2"))
    r1 = run_episode(s)
    s.seed = 99
    r2 = run_episode(s)
    assert r1.weights_rows == r2.weights_rows
    assert not np.array_equal(r1.particles, r2.particles)
    assert r1.scenario_hash != r2.scenario_hash


def test_weights_csv_layout(tmp_path):
    s = load_scenario(golden_path("table1"))
    emit_outputs(run_episode(s), tmp_path)
    rows = list(csv.reader((tmp_path / "weights.csv").open()))
    assert rows[0] == ["component", "prior", "centralized", "decentralized"]
    assert len(rows) == 4
    assert sum(float(r[2]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-12)


def test_table2_csv_layout(tmp_path):
    emit_outputs(run_episode(load_scenario(golden_path("table2"))), tmp_path)
    rows = list(csv.reader((tmp_path / "weights.csv").open()))
    assert rows[0] == ["i1", "j2", "weight"]
    assert [(int(r[0]), int(r[1])) for r in rows[1:]] == [(i, j) for i in range(2) for j in range(3)]


def test_no_particles_file_when_disabled(tmp_path):
    s = load_scenario(golden_path("table1"))
    s.emit_particles = 0
    names = {p.name for p in emit_outputs(run_episode(s), tmp_path)}
    assert names == {"weights.csv", "mixture.json", "report.json"}


def test_particle_rows_per_mixture(tmp_path):
    s = load_scenario(golden_path("table1"))
    s.emit_particles = 50
    emit_outputs(run_episode(s), tmp_path)
    rows = list(csv.reader((tmp_path / "particles.csv").open()))
    assert rows[0] == ["x", "y", "component", "agent"]
    # three agents plus the centralized reference
    assert len(rows) - 1 == 4 * 50
    assert {int(r[3]) for r in rows[1:]} == {-1, 0, 1, 2}


def test_report_contents(tmp_path):
    r = run_episode(load_scenario(golden_path("table1")))
    doc = json.loads(r.to_json())
    assert doc["scenario_hash"] == load_scenario(golden_path("table1")).digest()
    assert doc["diagnostics"]["consensus_converged"] is True
    assert doc["warnings"] == []


def test_cli_golden_run(tmp_path, capsys):
    assert main(["run", "--scenario", "table1", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "report.json").exists()


def test_cli_overrides(tmp_path):
    out = tmp_path / "o"
    code = main(["run", "--scenario", "table1", "--out", str(out), "--seed", "5",
                 "--tol", "1e-8", "--max-iters", "500", "--emit-particles", "0"])
    assert code == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert doc["seed"] == 5 and doc["diagnostics"]["consensus_tol"] == 1e-8
    assert not (out / "particles.csv").exists()


def test_cli_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    data = _golden_dict("table1")
    data["priors"][0][0]["weight"] = 0.1
    bad.write_text(json.dumps(data))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "priors[0]" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cli_missing_file(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "none.scenario"), "--out", str(tmp_path)]) == EXIT_INVALID


def test_cli_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text("{ not json")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "bad.scenario:1:" in capsys.readouterr().err


def test_cli_degenerate_exit_code(tmp_path, capsys):
    # no pair reaches the prune threshold, so nothing survives
    data = _golden_dict("table2")
    data["prune_threshold"] = 0.9
    path = tmp_path / "prune.scenario"
    path.write_text(json.dumps(data))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_DEGENERATE


def test_cli_mode_override_invalid(tmp_path, capsys):
    code = main(["run", "--scenario", "table1", "--out", str(tmp_path), "--mode-override", "heterogeneous"])
    assert code == EXIT_INVALID


def test_console_module_invocation(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gmfusion.cli", "run", "--scenario", "table2", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "weights.csv").exists()
