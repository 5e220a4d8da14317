import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from drillplan.cli import cli


FAST_SESSION = {
    "seed": 3,
    "n_particles": 12,
    "ess_sweeps": 3,
    "evidence_sweeps": 1,
    "n_null_calibration": 100,
    "mode": "simulated",
    "truth_hypothesis_id": 4,
    "planner": {
        "n_states": 12,
        "k_obs": 3,
        "n_obs_draws": 20,
        "n_cluster_samples": 200,
        "solver_budget_s": 10.0,
        "max_solver_iterations": 5,
        "n_profit_mc": 8,
    },
}


@pytest.fixture()
def runner():
    return CliRunner()


class TestSimulate:
    def test_fast_grid_simulation_writes_report(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(cli, [
            "simulate", "--seed", "5", "--policy", "grid", "--out", str(out),
            "--profile", "fast", "--no-figures",
        ])
        assert result.exit_code == 0, result.output
        assert (out / "summary.csv").exists()
        assert (out / "manifest.json").exists()
        assert "holes=36" in result.output

    def test_byte_identical_reports_for_same_seed(self, runner, tmp_path):
        args = ["simulate", "--seed", "9", "--policy", "grid", "--profile", "fast",
                "--no-figures"]
        a = runner.invoke(cli, args + ["--out", str(tmp_path / "a")])
        b = runner.invoke(cli, args + ["--out", str(tmp_path / "b")])
        assert a.exit_code == 0 and b.exit_code == 0
        for name in ("summary.csv", "trials.csv", "curves.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestSessionVerbs:
    def _new_session(self, runner, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(FAST_SESSION))
        result = runner.invoke(cli, [
            "session", "new", "--config", str(cfg_path), "--data-dir", str(tmp_path / "data"),
        ])
        assert result.exit_code == 0, result.output
        return result.output.strip()

    def test_new_observe_recommend_decide(self, runner, tmp_path):
        sid = self._new_session(runner, tmp_path)
        data = ["--data-dir", str(tmp_path / "data")]
        r = runner.invoke(cli, ["session", "observe", "--id", sid,
                                "--location", "8,12"] + data)
        assert r.exit_code == 0, r.output
        body = json.loads(r.output)
        assert body["n_observations"] == 1
        r = runner.invoke(cli, ["session", "recommend", "--id", sid] + data)
        assert r.exit_code == 0, r.output
        assert json.loads(r.output)["action"]["kind"] in ("drill", "develop", "abandon")
        r = runner.invoke(cli, ["session", "decide", "--id", sid,
                                "--decision", "abandon"] + data)
        assert r.exit_code == 0, r.output
        assert json.loads(r.output)["terminal"]

    def test_env_var_data_dir(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("DRILLPLAN_DATA_DIR", str(tmp_path / "envdata"))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(FAST_SESSION))
        result = runner.invoke(cli, ["session", "new", "--config", str(cfg_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "envdata").exists()


class TestExitCodes:
    def _run(self, args):
        return subprocess.run(
            [sys.executable, "-m", "drillplan.cli"] + args,
            capture_output=True, text=True, timeout=300,
        )

    def test_invalid_config_exits_1(self, tmp_path):
        bad = dict(FAST_SESSION)
        bad["hypotheses"] = [
            {"id": 1, "n_grabens": 1, "n_geochem": 1, "prior_prob": 0.4},
        ]
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps(bad))
        proc = self._run(["session", "new", "--config", str(cfg_path),
                          "--data-dir", str(tmp_path / "d")])
        assert proc.returncode == 1
        assert "prior_prob" in proc.stderr

    def test_unknown_session_exits_2(self, tmp_path):
        proc = self._run(["session", "recommend", "--id", "missing",
                          "--data-dir", str(tmp_path / "d")])
        assert proc.returncode == 2

    def test_usage_error_exits_1(self, tmp_path):
        proc = self._run(["session", "observe", "--id", "x", "--location", "1,1",
                          "--thickness", "2.0", "--data-dir", str(tmp_path / "d")])
        assert proc.returncode == 1
