"""Report emission: comma-separated tables, a run manifest, and companion
matplotlib figures rendered to files next to the delimited output.

All numeric fields are written with repr so that identical results emit
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import ExperimentSummary, TrialResult


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_report(summary: ExperimentSummary, outdir: str | Path, figures: bool = True) -> list[Path]:
    """Write summary.csv, trials.csv, curves.csv, falsification.csv,
    manifest.json and figures; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    summary_path = outdir / "summary.csv"
    if summary.rows:
        header = list(summary.rows[0].keys())
        _write_csv(summary_path, header, [[r[k] for k in header] for r in summary.rows])
    else:
        _write_csv(summary_path, ["policy"], [])
    created.append(summary_path)

    trials_path = outdir / "trials.csv"
    t_header = [
        "trial", "policy", "holes", "decision", "decision_correct", "true_profit",
        "final_expected_profit", "all_falsified_at", "cap_hit", "incorrect_abandon",
    ]
    t_rows = [
        [
            t.truth_seed, t.policy_name, t.holes_drilled, t.decision, t.decision_correct,
            t.true_profit, t.expected_profit_curve[-1], t.all_falsified_at, t.cap_hit,
            t.incorrect_abandon,
        ]
        for t in summary.trials
    ]
    _write_csv(trials_path, t_header, t_rows)
    created.append(trials_path)

    curves_path = outdir / "curves.csv"
    c_rows = []
    for t in summary.trials:
        for step, (err, exp) in enumerate(zip(t.value_error_curve, t.expected_profit_curve)):
            c_rows.append([t.truth_seed, t.policy_name, step, err, exp])
    _write_csv(curves_path, ["trial", "policy", "holes", "value_error", "expected_profit"], c_rows)
    created.append(curves_path)

    fals_path = outdir / "falsification.csv"
    f_rows = []
    for t in summary.trials:
        for hid in sorted(t.falsified_at):
            f_rows.append([t.truth_seed, t.policy_name, hid, t.falsified_at[hid]])
    _write_csv(fals_path, ["trial", "policy", "hypothesis", "falsified_at_hole"], f_rows)
    created.append(fals_path)

    manifest_path = outdir / "manifest.json"
    manifest = {
        "experiment": summary.name,
        "seed": summary.seed,
        "config": summary.config_echo,
        "files": [p.name for p in created],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    created.append(manifest_path)

    if figures:
        created.extend(render_figures(summary, outdir))
    return created


def render_figures(summary: ExperimentSummary, outdir: Path) -> list[Path]:
    outdir = Path(outdir)
    created = []
    if summary.mean_curves:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, curve in sorted(summary.mean_curves.items()):
            ax.plot(range(len(curve)), curve, marker="o", ms=3, label=name)
        ax.set_xlabel("bore holes")
        ax.set_ylabel("mean |estimated - true| deposit value")
        ax.set_title("Value-estimation error vs drilling effort")
        ax.legend()
        fig.tight_layout()
        p = outdir / "value_error.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        created.append(p)

    policies = sorted({t.policy_name for t in summary.trials})
    if summary.name == "aleatoric" and summary.rows:
        fig, axes = plt.subplots(1, 2, figsize=(8, 4))
        accs = [r["accuracy"] for r in summary.rows]
        errs = [r["accuracy_std"] for r in summary.rows]
        names = [r["policy"] for r in summary.rows]
        axes[0].bar(names, accs, yerr=errs, color=["#777", "#2a6"])
        axes[0].set_ylim(0, 1)
        axes[0].set_title("go/no-go accuracy")
        holes = [r["holes"] for r in summary.rows]
        herr = [r["holes_std"] for r in summary.rows]
        axes[1].bar(names, holes, yerr=herr, color=["#777", "#2a6"])
        axes[1].set_title("bore holes to decision")
        fig.tight_layout()
        p = outdir / "decision_summary.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        created.append(p)

    if summary.name == "falsification":
        fig, ax = plt.subplots(figsize=(6, 4))
        data = []
        for name in policies:
            sel = [t for t in summary.trials if t.policy_name == name]
            cap = 36 if name == "grid" else 40
            data.append([
                t.all_falsified_at if t.all_falsified_at is not None else cap for t in sel
            ])
        ax.boxplot(data, tick_labels=policies)
        ax.set_ylabel("holes until all hypotheses falsified (cap if never)")
        ax.set_title("Falsification speed")
        fig.tight_layout()
        p = outdir / "falsification_speed.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        created.append(p)
    return created


def render_trial_figures(
    trial: TrialResult,
    loglik_trace: list,
    hypothesis_ids: list[int],
    outdir: str | Path,
) -> list[Path]:
    """Per-trial diagnostics: drill sequence and log-likelihood-vs-null trace."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created = []
    if loglik_trace:
        trace = np.asarray(loglik_trace)
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for i, hid in enumerate(hypothesis_ids):
            ax.plot(range(1, trace.shape[0] + 1), trace[:, i], marker="o", ms=3,
                    label=f"hypothesis {hid}")
        ax.plot(range(1, trace.shape[0] + 1), trace[:, -1], "k--", label="null")
        ax.set_xlabel("bore holes")
        ax.set_ylabel("log likelihood")
        ax.legend()
        ax.set_title(f"{trial.policy_name}: hypothesis log-likelihood vs null")
        fig.tight_layout()
        p = outdir / f"loglik_trace_{trial.policy_name}.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        created.append(p)
    if trial.cells:
        fig, ax = plt.subplots(figsize=(5, 5))
        cells = np.asarray(trial.cells)
        ax.scatter(cells[:, 1], cells[:, 0], c=range(len(cells)), cmap="viridis", s=60)
        for i, (r, c) in enumerate(trial.cells):
            ax.annotate(str(i + 1), (c, r), fontsize=7, ha="center", va="center")
        ax.set_xlim(-0.5, 31.5)
        ax.set_ylim(-0.5, 31.5)
        ax.set_aspect("equal")
        ax.set_title(f"{trial.policy_name}: drill sequence")
        fig.tight_layout()
        p = outdir / f"drill_sequence_{trial.policy_name}.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        created.append(p)
    return created


def read_summary_csv(path: str | Path) -> list[dict]:
    """Parse a summary.csv back into row dicts (floats restored)."""
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if k == "policy":
                    parsed[k] = v
                else:
                    parsed[k] = float(v)
            rows.append(parsed)
        return rows
