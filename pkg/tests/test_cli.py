import json
import os
import subprocess
import sys

import pytest

from zilot.cli import main

CHAIN = {"name": "chain-half", "env": "chain", "params": {"p": 0.5}, "goals": [0, 1, 2], "horizon": 3, "t_max": 20}


def write(path, obj):
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


@pytest.fixture
def cfg_path(tmp_path):
    cfg = {"tasks": [CHAIN], "planners": [{"planner": "zilot"}, {"planner": "mpc+cls", "threshold": 1}], "n_seeds": 2}
    return write(tmp_path / "cfg.json", cfg)


def test_run_and_metrics(tmp_path, cfg_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out", str(out), "--jobs", "1", "--seed-base", "0"]) == 0
    cells = json.loads((out / "results.json").read_text())
    assert len(cells) == 4
    capsys.readouterr()
    # metrics recomputed from the stored trajectories match the result records
    for cell in cells:
        assert main(["metrics", str(out / cell["diagnostics_path"])]) == 0
        (ep,) = json.loads(capsys.readouterr().out)
        assert ep["w_min"] == pytest.approx(cell["w_min"], abs=1e-12)
        assert ep["goal_fraction"] == cell["goal_fraction"]


def test_metrics_trajectory_file(tmp_path, capsys):
    path = write(tmp_path / "traj.json", {"task": CHAIN, "trajectory": [0, 1, 1, 1]})
    assert main(["metrics", path]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["w_min"] == pytest.approx(1 / 3) and out["goal_fraction"] == pytest.approx(2 / 3)
    assert main(["metrics", write(tmp_path / "bare.json", {"trajectory": [0]})]) == 2


@pytest.mark.parametrize(
    "cfg",
    [
        {"tasks": [CHAIN], "planners": [{"planner": "dqn"}]},
        {"tasks": [{**CHAIN, "env": "fetch"}], "planners": [{"planner": "zilot"}]},
        "{not json",
    ],
)
def test_run_config_errors_exit_2(tmp_path, cfg, capsys):
    path = write(tmp_path / "cfg.json", cfg)
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_and_bad_args_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["ot", "solve", "x.json", "--method", "emd"])
    assert exc.value.code == 2


def test_runtime_failure_exit_3(tmp_path, cfg_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", cfg_path, "--out", str(blocker)]) == 3
    assert "runtime failure" in capsys.readouterr().err


def test_env_dump(tmp_path, capsys):
    assert main(["env", "dump", "chain", "--params", '{"p": 0.3}']) == 0
    dumped = json.loads(capsys.readouterr().out)
    assert main(["env", "dump", "--task", write(tmp_path / "t.json", {**CHAIN, "env": dumped}), "--compact"]) == 0
    assert json.loads(capsys.readouterr().out) == dumped
    assert main(["env", "dump", "pointmass"]) == 0
    assert json.loads(capsys.readouterr().out)["name"] == "pointmass"
    assert main(["env", "dump", "chain", "--params", "[1]"]) == 2
    assert main(["env", "dump"]) == 2


@pytest.mark.parametrize("method", ["simplex", "sinkhorn", "unbalanced"])
def test_ot_solve(tmp_path, method, capsys):
    path = write(tmp_path / "p.json", {"cost": [[0, 1], [1, 0]]})
    assert main(["ot", "solve", path, "--method", method, "--eta", "0.01"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["cost"] == pytest.approx(0.0, abs=1e-6)
    assert len(plan["coupling"]) == 2


def test_ot_solve_bad_problem(tmp_path):
    assert main(["ot", "solve", write(tmp_path / "p.json", {"cost": [[1, -1]]})]) == 2


def test_module_entry_point(tmp_path):
    path = write(tmp_path / "p.json", {"cost": [[2.0]]})
    env = {**os.environ, "PYTHONPATH": os.path.join(os.path.dirname(__file__), "..", "src")}
    proc = subprocess.run([sys.executable, "-m", "zilot.cli", "ot", "solve", path], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and json.loads(proc.stdout)["cost"] == 2.0
    proc = subprocess.run([sys.executable, "-m", "zilot.cli", "bogus"], capture_output=True, text=True, env=env)
    assert proc.returncode == 2
