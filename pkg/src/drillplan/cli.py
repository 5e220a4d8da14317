"""Command-line entry points.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import belief as bel
from . import geology, harness, report, solver
from .config import ConfigError, validate_config
from .geology import default_hypotheses
from .service import SessionStore, belief_summary, falsification_summary


@click.group()
def cli() -> None:
    """Drill-campaign planning: simulation, experiments, and sessions."""


def _trial_config(profile: str) -> harness.TrialConfig:
    if profile == "fast":  # smoke-test sizes, not for real studies
        from .discretize import PlannerConfig

        return harness.TrialConfig(
            planner=PlannerConfig(
                n_states=24, k_obs=4, n_obs_draws=40, n_cluster_samples=400,
                solver_budget_s=10.0, max_solver_iterations=8, n_profit_mc=24,
            ),
            n_particles=30,
            ess_sweeps=6,
            evidence_sweeps=2,
            n_null_calibration=100,
        )
    return harness.TrialConfig()


def _load_config(config_path: str | None, seed: int | None, mode: str | None = None) -> dict:
    raw = {}
    if config_path:
        raw = json.loads(Path(config_path).read_text())
    if seed is not None:
        raw["seed"] = seed
    if mode is not None:
        raw["mode"] = mode
    return raw


@cli.command()
@click.option("--seed", type=int, default=0, envvar="DRILLPLAN_SEED", show_default=True)
@click.option("--policy", type=click.Choice(["pomdp", "grid"]), default="pomdp", show_default=True)
@click.option("--truth-hypothesis", type=int, default=4, show_default=True,
              help="hypothesis class the hidden truth is sampled from")
@click.option("--out", type=click.Path(), default="runs/simulate", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--profile", type=click.Choice(["default", "fast"]), default="default",
              show_default=True, help="'fast' shrinks sampling sizes for smoke tests")
def simulate(seed: int, policy: str, truth_hypothesis: int, out: str, figures: bool,
             profile: str) -> None:
    """Run one seeded trial against a sampled truth and write a report."""
    cfg = _trial_config(profile)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    truth_rng, trial_rng = rng.spawn(2)
    truth_spec = harness.truth_hypothesis(truth_hypothesis)
    truth = geology.sample_truth(truth_spec, truth_rng, cfg.model)
    result = harness.run_trial(
        truth, default_hypotheses(), policy, cfg, trial_rng, truth_seed=seed
    )
    summary = harness.ExperimentSummary(
        name="simulate",
        rows=[{
            "policy": policy,
            "accuracy": float(result.decision_correct),
            "accuracy_std": 0.0,
            "holes": float(result.holes_drilled),
            "holes_std": 0.0,
        }],
        trials=[result],
        mean_curves={policy: result.value_error_curve},
        config_echo=harness._echo(cfg, 1),
        seed=seed,
    )
    paths = report.emit_report(summary, out, figures=figures)
    from . import textio

    truth_path = Path(out) / "truth_geomodel.txt"
    with truth_path.open("w") as fh:
        textio.write_geomodel(truth, fh)
    paths.append(truth_path)
    if figures:
        paths.extend(
            report.render_trial_figures(
                result, result.loglik_trace, result.hypothesis_ids, out
            )
        )
    click.echo(
        f"policy={policy} holes={result.holes_drilled} decision={result.decision} "
        f"correct={result.decision_correct} true_profit={result.true_profit:.3f}"
    )
    for p in paths:
        click.echo(f"wrote {p}")


@cli.group()
def experiment() -> None:
    """Multi-trial experiments with report emission."""


@experiment.command()
@click.option("--trials", type=int, default=17, show_default=True)
@click.option("--seed", type=int, default=0, envvar="DRILLPLAN_SEED", show_default=True)
@click.option("--out", type=click.Path(), default="runs/aleatoric", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--profile", type=click.Choice(["default", "fast"]), default="default",
              show_default=True, help="'fast' shrinks sampling sizes for smoke tests")
def aleatoric(trials: int, seed: int, out: str, figures: bool, profile: str) -> None:
    """Grid vs POMDP with the correct hypothesis class in the belief."""
    cfg = _trial_config(profile)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    summary = harness.experiment_aleatoric(trials, cfg, rng, seed=seed)
    for p in report.emit_report(summary, out, figures=figures):
        click.echo(f"wrote {p}")
    for row in summary.rows:
        click.echo(
            f"{row['policy']}: accuracy {row['accuracy']:.3f}±{row['accuracy_std']:.3f} "
            f"holes {row['holes']:.2f}±{row['holes_std']:.2f}"
        )


@experiment.command()
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, envvar="DRILLPLAN_SEED", show_default=True)
@click.option("--out", type=click.Path(), default="runs/falsify", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--profile", type=click.Choice(["default", "fast"]), default="default",
              show_default=True, help="'fast' shrinks sampling sizes for smoke tests")
def falsify(trials: int, seed: int, out: str, figures: bool, profile: str) -> None:
    """Truths outside the belief's hypothesis set: falsification speed."""
    cfg = _trial_config(profile)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    summary = harness.experiment_falsification(trials, cfg, rng, seed=seed)
    for p in report.emit_report(summary, out, figures=figures):
        click.echo(f"wrote {p}")
    for row in summary.rows:
        click.echo(
            f"{row['policy']}: mean holes to all-falsified "
            f"{row['mean_holes_to_all_falsified']:.2f} "
            f"(falsified in {row['fraction_falsified']:.0%} of trials, "
            f"incorrect abandon {row['fraction_incorrect_abandon']:.0%})"
        )


@cli.command()
@click.option("--port", type=int, default=8700, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default="sessions",
              envvar="DRILLPLAN_DATA_DIR", show_default=True)
def serve(port: int, host: str, data_dir: str) -> None:
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    app = create_app(SessionStore(data_dir))
    uvicorn.run(app, host=host, port=port)


@cli.group()
def session() -> None:
    """Offline, file-backed session management."""


@session.command("new")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, envvar="DRILLPLAN_SEED")
@click.option("--mode", type=click.Choice(["field", "simulated"]), default=None)
@click.option("--data-dir", type=click.Path(), default="sessions",
              envvar="DRILLPLAN_DATA_DIR", show_default=True)
def session_new(config_path, seed, mode, data_dir) -> None:
    """Create a session and print its id."""
    store = SessionStore(data_dir)
    state = store.create(_load_config(config_path, seed, mode))
    click.echo(state.session_id)


@session.command("observe")
@click.option("--id", "session_id", required=True)
@click.option("--location", required=True, help="row,col")
@click.option("--thickness", type=float, default=None)
@click.option("--grade", type=float, default=None)
@click.option("--graben/--no-graben", default=None)
@click.option("--geochem/--no-geochem", default=None)
@click.option("--data-dir", type=click.Path(), default="sessions",
              envvar="DRILLPLAN_DATA_DIR", show_default=True)
def session_observe(session_id, location, thickness, grade, graben, geochem, data_dir) -> None:
    """Record a drill result (values optional in simulated mode)."""
    store = SessionStore(data_dir)
    r, c = (int(v) for v in location.split(","))
    payload: dict = {"location": [r, c]}
    if thickness is not None:
        if grade is None or graben is None or geochem is None:
            raise click.UsageError("field mode needs --thickness --grade --graben/--no-graben --geochem/--no-geochem")
        payload.update(thickness=thickness, grade=grade, graben=graben, geochem=geochem)
    state = store.add_observation(session_id, payload)
    summary = belief_summary(state, include_grids=False)
    summary["falsification"] = falsification_summary(state)
    click.echo(json.dumps(summary, sort_keys=True))


@session.command("recommend")
@click.option("--id", "session_id", required=True)
@click.option("--data-dir", type=click.Path(), default="sessions",
              envvar="DRILLPLAN_DATA_DIR", show_default=True)
def session_recommend(session_id, data_dir) -> None:
    """Print the planner's recommendation for the next action."""
    store = SessionStore(data_dir)
    click.echo(json.dumps(store.recommendation(session_id), sort_keys=True))


@session.command("decide")
@click.option("--id", "session_id", required=True)
@click.option("--decision", type=click.Choice(["develop", "abandon"]), required=True)
@click.option("--data-dir", type=click.Path(), default="sessions",
              envvar="DRILLPLAN_DATA_DIR", show_default=True)
def session_decide(session_id, decision, data_dir) -> None:
    """Record the terminal go/no-go decision."""
    store = SessionStore(data_dir)
    state = store.decide(session_id, decision)
    click.echo(json.dumps(belief_summary(state, include_grids=False), sort_keys=True))


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except ConfigError as exc:
        click.echo(f"invalid configuration: {exc}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
