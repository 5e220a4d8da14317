"""Reproducible campaign experiments: grid baseline vs POMDP agent.

A trial drills a hidden truth with one policy, keeps the belief and
falsification monitor updated after every hole, and records the value-error
curve, the go/no-go outcome, and when each hypothesis was first falsified.
Policies receive only the belief and history, never the truth grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import belief as bel
from . import falsify, geology, solver
from .discretize import ABANDON, DEVELOP, Action, PlannerConfig
from .geology import EconParams, GeologyModel, HypothesisSpec, default_hypotheses

GRID_PATTERN = 6
MAX_HOLES = 40
GRID_HOLES = GRID_PATTERN * GRID_PATTERN


def grid_coordinates(n: int = GRID_PATTERN, size: int = 32) -> list[int]:
    """Evenly spaced drill coordinates: round((i + 0.5) * size / n)."""
    return [round((i + 0.5) * size / n) for i in range(n)]


def grid_policy(step: int, expected_profit_mean: float | None = None) -> Action:
    """The 6x6 pattern in row-major order; the final step decides go/no-go
    by the sign of the expected profit under the final belief."""
    if step > GRID_HOLES:
        raise ValueError(f"grid policy has no step {step}")
    if step == GRID_HOLES:
        if expected_profit_mean is None:
            raise ValueError("the decision step needs the expected profit")
        return Action(DEVELOP) if expected_profit_mean > 0 else Action(ABANDON)
    coords = grid_coordinates()
    return Action("drill", (coords[step // GRID_PATTERN], coords[step % GRID_PATTERN]))


@dataclass(frozen=True)
class TrialConfig:
    """Everything a trial needs beyond the truth itself."""

    model: GeologyModel = field(default_factory=GeologyModel)
    econ: EconParams = field(default_factory=EconParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    n_particles: int = bel.DEFAULT_N_PARTICLES
    ess_sweeps: int = bel.DEFAULT_ESS_SWEEPS
    evidence_sweeps: int = bel.DEFAULT_EVIDENCE_SWEEPS
    n_null_calibration: int = 150
    falsify_margin: float = 2.0  # stability margin against one-hole flukes
    max_holes: int = MAX_HOLES


@dataclass
class TrialResult:
    truth_seed: int
    policy_name: str
    holes_drilled: int
    decision: str  # develop | abandon | none
    decision_correct: bool
    true_profit: float
    value_error_curve: list[float]
    expected_profit_curve: list[float]
    falsified_at: dict[int, int | None]
    all_falsified_at: int | None
    cells: list[tuple[int, int]]
    cap_hit: bool
    incorrect_abandon: bool
    hypothesis_ids: list[int] = field(default_factory=list)
    loglik_trace: list[list[float]] = field(default_factory=list)


def observe_truth(
    truth: geology.GeoModel,
    cell: tuple[int, int],
    model: GeologyModel,
    rng: np.random.Generator,
    step: int,
) -> bel.DrillObservation:
    """Noisy field measurements plus the true domain memberships at a cell."""
    r, c = cell
    return bel.DrillObservation(
        location=cell,
        thickness_obs=float(truth.thickness[r, c] + rng.normal(0.0, model.noise_std)),
        grade_obs=float(truth.grade[r, c] + rng.normal(0.0, model.noise_std)),
        graben_obs=bool(truth.graben_mask[r, c]),
        geochem_obs=bool(truth.geochem_mask[r, c]),
        step_index=step,
    )


def run_trial(
    truth: geology.GeoModel,
    hypotheses: tuple[HypothesisSpec, ...],
    policy_name: str,
    cfg: TrialConfig,
    rng: np.random.Generator,
    truth_seed: int = 0,
    continue_after_decision: bool = False,
) -> TrialResult:
    """One full campaign against a fixed truth with the named policy.

    With ``continue_after_decision`` (falsification studies) the first
    terminal recommendation is recorded as the agent's decision but drilling
    continues with the planner's best drill action until every hypothesis is
    falsified or the hole cap is reached.
    """
    if policy_name not in ("grid", "pomdp"):
        raise ValueError(f"unknown policy {policy_name!r}")
    init_rng, null_rng, obs_rng, profit_rng, plan_rng = rng.spawn(5)
    null_model = falsify.build_null(hypotheses, cfg.n_null_calibration, null_rng, cfg.model)
    b = bel.init_belief(
        hypotheses, cfg.n_particles, init_rng, cfg.model, null_model=null_model
    )
    true_profit = geology.profit(truth, cfg.econ, 0)

    mean0, _ = bel.expected_profit(b, cfg.econ, cfg.planner.n_profit_mc, profit_rng.spawn(1)[0])
    value_error = [abs(mean0 - true_profit)]
    expected_curve = [mean0]
    falsified_at: dict[int, int | None] = {h.id: None for h in hypotheses}
    all_falsified_at: int | None = None
    cells: list[tuple[int, int]] = []
    decision = "none"
    cap_hit = False
    max_holes = GRID_HOLES if policy_name == "grid" else cfg.max_holes

    step = 0
    while True:
        if policy_name == "grid":
            action = grid_policy(step, expected_curve[-1] if step == GRID_HOLES else None)
        else:
            if step >= max_holes:
                cap_hit = decision == "none"
                break
            action, diag = solver.plan_step(b, cfg.planner, cfg.econ, plan_rng.spawn(1)[0])
            if action.terminal and continue_after_decision:
                if decision == "none":
                    decision = action.kind
                cell = diag.get("best_drill_cell")
                if cell is None:
                    break
                action = Action("drill", tuple(cell))
        if action.terminal:
            decision = action.kind
            break
        o = observe_truth(truth, action.cell, cfg.model, obs_rng.spawn(1)[0], step)
        b = bel.update_belief(
            b, o, cfg.ess_sweeps, obs_rng.spawn(1)[0], evidence_sweeps=cfg.evidence_sweeps
        )
        cells.append(action.cell)
        mean, _ = bel.expected_profit(
            b, cfg.econ, cfg.planner.n_profit_mc, profit_rng.spawn(1)[0]
        )
        value_error.append(abs(mean - true_profit))
        expected_curve.append(mean)
        status = falsify.falsification_status(b, null_model, cfg.falsify_margin)
        for hid, flag in zip(status.hypothesis_ids, status.falsified):
            if flag and falsified_at[hid] is None:
                falsified_at[hid] = step + 1
        if status.all_falsified and all_falsified_at is None:
            all_falsified_at = step + 1
            if continue_after_decision:
                step += 1
                break
        step += 1

    holes = len(cells)
    correct = (decision == DEVELOP and true_profit > 0) or (
        decision == ABANDON and true_profit <= 0
    )
    return TrialResult(
        truth_seed=truth_seed,
        policy_name=policy_name,
        holes_drilled=holes,
        decision=decision,
        decision_correct=correct,
        true_profit=true_profit,
        value_error_curve=value_error,
        expected_profit_curve=expected_curve,
        falsified_at=falsified_at,
        all_falsified_at=all_falsified_at,
        cells=cells,
        cap_hit=cap_hit,
        incorrect_abandon=(decision == ABANDON and true_profit > 0),
        hypothesis_ids=[h.id for h in hypotheses],
        loglik_trace=[[float(v) for v in row] for row in b.loglik_trace],
    )


def truth_hypothesis(hid: int = 4) -> HypothesisSpec:
    """The experiment truth class (2 grabens, 2 geochemical domains)."""
    for h in default_hypotheses():
        if h.id == hid:
            return h
    raise ValueError(f"no default hypothesis with id {hid}")


@dataclass
class ExperimentSummary:
    name: str
    rows: list[dict]
    trials: list[TrialResult]
    mean_curves: dict[str, list[float]]
    config_echo: dict
    seed: int


def _curve_matrix(trials: list[TrialResult], length: int) -> np.ndarray:
    out = np.empty((len(trials), length))
    for i, t in enumerate(trials):
        curve = t.value_error_curve
        pad = [curve[-1]] * max(0, length - len(curve))
        out[i] = (list(curve) + pad)[:length]
    return out


def experiment_aleatoric(
    n_trials: int, cfg: TrialConfig, rng: np.random.Generator, seed: int = 0
) -> ExperimentSummary:
    """Grid vs POMDP on truths from the 2-graben/2-domain class with the
    full 4-hypothesis belief (Fig. 7 analogue)."""
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    hypotheses = default_hypotheses()
    trials: list[TrialResult] = []
    for i in range(n_trials):
        truth_rng, grid_rng, pomdp_rng = rng.spawn(3)
        truth = geology.sample_truth(truth_hypothesis(), truth_rng, cfg.model)
        trials.append(run_trial(truth, hypotheses, "grid", cfg, grid_rng, truth_seed=i))
        trials.append(run_trial(truth, hypotheses, "pomdp", cfg, pomdp_rng, truth_seed=i))
    rows = []
    mean_curves = {}
    for name in ("grid", "pomdp"):
        sel = [t for t in trials if t.policy_name == name]
        acc = np.array([t.decision_correct for t in sel], dtype=float)
        holes = np.array([t.holes_drilled for t in sel], dtype=float)
        rows.append(
            {
                "policy": name,
                "accuracy": acc.mean(),
                "accuracy_std": acc.std() / np.sqrt(len(sel)),
                "holes": holes.mean(),
                "holes_std": holes.std() / np.sqrt(len(sel)),
            }
        )
        mean_curves[name] = list(_curve_matrix(sel, GRID_HOLES + 1).mean(axis=0))
    return ExperimentSummary(
        name="aleatoric",
        rows=rows,
        trials=trials,
        mean_curves=mean_curves,
        config_echo=_echo(cfg, n_trials),
        seed=seed,
    )


def experiment_falsification(
    n_trials: int, cfg: TrialConfig, rng: np.random.Generator, seed: int = 0
) -> ExperimentSummary:
    """Truths from the 2-graben/2-domain class against a belief that
    excludes that class (hypotheses 1-3, renormalized); records holes until
    every hypothesis is falsified and the incorrect-abandon failure mode."""
    excluded = [h for h in default_hypotheses() if h.id != truth_hypothesis().id]
    total = sum(h.prior_prob for h in excluded)
    hypotheses = tuple(replace(h, prior_prob=h.prior_prob / total) for h in excluded)
    trials = []
    for i in range(n_trials):
        truth_rng, grid_rng, pomdp_rng = rng.spawn(3)
        truth = geology.sample_truth(truth_hypothesis(), truth_rng, cfg.model)
        trials.append(run_trial(truth, hypotheses, "grid", cfg, grid_rng, truth_seed=i))
        trials.append(
            run_trial(truth, hypotheses, "pomdp", cfg, pomdp_rng, truth_seed=i,
                      continue_after_decision=True)
        )
    rows = []
    for name in ("grid", "pomdp"):
        sel = [t for t in trials if t.policy_name == name]
        cap = GRID_HOLES if name == "grid" else cfg.max_holes
        holes_to = np.array(
            [t.all_falsified_at if t.all_falsified_at is not None else cap for t in sel],
            dtype=float,
        )
        rows.append(
            {
                "policy": name,
                "mean_holes_to_all_falsified": holes_to.mean(),
                "fraction_falsified": np.mean(
                    [t.all_falsified_at is not None for t in sel]
                ),
                "fraction_incorrect_abandon": np.mean(
                    [t.incorrect_abandon for t in sel]
                ),
            }
        )
    return ExperimentSummary(
        name="falsification",
        rows=rows,
        trials=trials,
        mean_curves={},
        config_echo=_echo(cfg, n_trials),
        seed=seed,
    )


def _echo(cfg: TrialConfig, n_trials: int) -> dict:
    return {
        "n_trials": n_trials,
        "grid_shape": list(cfg.model.grid_shape),
        "kernel": [cfg.model.kernel.marginal_std, cfg.model.kernel.correlation_length,
                   cfg.model.kernel.smoothness],
        "noise_std": cfg.model.noise_std,
        "econ": [cfg.econ.cutoff_grade, cfg.econ.extraction_cost, cfg.econ.drill_cost,
                 cfg.econ.price_scale],
        "n_particles": cfg.n_particles,
        "ess_sweeps": cfg.ess_sweeps,
        "evidence_sweeps": cfg.evidence_sweeps,
        "planner": [cfg.planner.n_states, cfg.planner.stride, cfg.planner.k_obs,
                    cfg.planner.n_obs_draws, cfg.planner.discount, cfg.planner.epsilon,
                    cfg.planner.solver_budget_s],
        "falsify_margin": cfg.falsify_margin,
        "max_holes": cfg.max_holes,
    }
