import numpy as np
import pytest

from drillplan import belief as bel
from drillplan import geology, harness, report, solver
from drillplan.discretize import ABANDON, DEVELOP, PlannerConfig
from drillplan.geology import EconParams, GeologyModel, default_hypotheses
from drillplan.harness import TrialConfig, grid_coordinates, grid_policy, run_trial


def fast_cfg(**overrides):
    base = dict(
        planner=PlannerConfig(
            n_states=24, k_obs=4, n_obs_draws=40, n_cluster_samples=400,
            solver_budget_s=10.0, max_solver_iterations=8, n_profit_mc=24,
        ),
        n_particles=30,
        ess_sweeps=6,
        evidence_sweeps=2,
        n_null_calibration=100,
    )
    base.update(overrides)
    return TrialConfig(**base)


class TestGridPolicy:
    def test_coordinates(self):
        assert grid_coordinates() == [3, 8, 13, 19, 24, 29]

    def test_first_and_last_cells(self):
        assert grid_policy(0).cell == (3, 3)
        assert grid_policy(35).cell == (29, 29)
        assert grid_policy(7).cell == (3, 8) or grid_policy(7).cell == (8, 8)

    def test_row_major_order(self):
        cells = [grid_policy(s).cell for s in range(36)]
        assert cells[:6] == [(3, c) for c in [3, 8, 13, 19, 24, 29]]
        assert len(set(cells)) == 36

    def test_decision_step_sign_rule(self):
        assert grid_policy(36, expected_profit_mean=-5.0).kind == ABANDON
        assert grid_policy(36, expected_profit_mean=4.0).kind == DEVELOP

    def test_out_of_range_step(self):
        with pytest.raises(ValueError):
            grid_policy(37)


class TestPlanStepTerminals:
    def _certain_belief(self, price):
        # one hypothesis, observations absent: profit sign is decided by the
        # price scale, so the optimal action is the matching terminal
        model = GeologyModel()
        rng = np.random.default_rng(0)
        b = bel.init_belief(
            [geology.HypothesisSpec(1, 1, 1, 1.0)], 10, rng, model
        )
        return b, EconParams(price_scale=price)

    def test_certain_profitable_develops(self):
        b, e = self._certain_belief(price=5.0)
        cfg = PlannerConfig(n_states=20, k_obs=4, n_obs_draws=30, solver_budget_s=1.0)
        action, _ = solver.plan_step(b, cfg, e, np.random.default_rng(1))
        assert action.kind == DEVELOP

    def test_certain_unprofitable_abandons(self):
        b, e = self._certain_belief(price=0.01)
        cfg = PlannerConfig(n_states=20, k_obs=4, n_obs_draws=30, solver_budget_s=1.0)
        action, _ = solver.plan_step(b, cfg, e, np.random.default_rng(2))
        assert action.kind == ABANDON


class TestRunTrial:
    def test_grid_drills_exactly_36_holes(self):
        cfg = fast_cfg()
        truth = geology.sample_truth(
            harness.truth_hypothesis(), np.random.default_rng(3), cfg.model
        )
        result = run_trial(truth, default_hypotheses(), "grid", cfg,
                           np.random.default_rng(4), truth_seed=3)
        assert result.holes_drilled == 36
        assert result.decision in (DEVELOP, ABANDON)
        assert len(result.value_error_curve) == 37
        assert result.decision_correct == (
            (result.decision == DEVELOP) == (result.true_profit > 0)
        )

    def test_reproducibility(self):
        cfg = fast_cfg()
        truth = geology.sample_truth(
            harness.truth_hypothesis(), np.random.default_rng(5), cfg.model
        )
        a = run_trial(truth, default_hypotheses(), "grid", cfg, np.random.default_rng(6))
        b = run_trial(truth, default_hypotheses(), "grid", cfg, np.random.default_rng(6))
        assert a.value_error_curve == b.value_error_curve
        assert a.cells == b.cells
        assert a.decision == b.decision

    def test_policies_never_see_truth(self):
        import inspect

        sig = inspect.signature(solver.plan_step)
        assert "truth" not in sig.parameters
        assert {"b", "cfg", "e", "rng"} <= set(sig.parameters)


class TestEmitReport:
    def _summary(self, trials):
        return harness.ExperimentSummary(
            name="aleatoric",
            rows=[{"policy": "grid", "accuracy": 1.0, "accuracy_std": 0.0,
                   "holes": 36.0, "holes_std": 0.0}] if trials else [],
            trials=trials,
            mean_curves={"grid": [3.0, 2.0, 1.0]} if trials else {},
            config_echo={"n_trials": len(trials)},
            seed=7,
        )

    def _trial(self):
        return harness.TrialResult(
            truth_seed=0, policy_name="grid", holes_drilled=2, decision="develop",
            decision_correct=True, true_profit=4.5,
            value_error_curve=[3.0, 2.0, 1.0], expected_profit_curve=[1.5, 2.5, 3.5],
            falsified_at={1: None, 2: 2}, all_falsified_at=None,
            cells=[(3, 3), (3, 8)], cap_hit=False, incorrect_abandon=False,
        )

    def test_empty_results_emit_headers(self, tmp_path):
        paths = report.emit_report(self._summary([]), tmp_path, figures=False)
        curves = (tmp_path / "curves.csv").read_text().splitlines()
        assert curves == ["trial,policy,holes,value_error,expected_profit"]
        assert (tmp_path / "manifest.json").exists()

    def test_one_trial_one_row_per_step(self, tmp_path):
        report.emit_report(self._summary([self._trial()]), tmp_path, figures=False)
        curves = (tmp_path / "curves.csv").read_text().splitlines()
        assert len(curves) == 1 + 3  # header + one row per curve entry

    def test_round_trip_summary(self, tmp_path):
        summary = self._summary([self._trial()])
        report.emit_report(summary, tmp_path, figures=False)
        parsed = report.read_summary_csv(tmp_path / "summary.csv")
        assert parsed == summary.rows

    def test_byte_identical_reemission(self, tmp_path):
        summary = self._summary([self._trial()])
        report.emit_report(summary, tmp_path / "a", figures=False)
        report.emit_report(summary, tmp_path / "b", figures=False)
        for name in ("summary.csv", "trials.csv", "curves.csv", "falsification.csv",
                     "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_figures_rendered(self, tmp_path):
        paths = report.emit_report(self._summary([self._trial()]), tmp_path, figures=True)
        names = {p.name for p in paths}
        assert "value_error.png" in names
        assert "decision_summary.png" in names
