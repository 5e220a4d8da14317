"""Session configuration: validation and construction of model objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import gp
from .discretize import PlannerConfig
from .geology import EconParams, GeologyModel, HypothesisSpec, default_hypotheses


class ConfigError(ValueError):
    """Invalid session configuration; carries per-field messages."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in errors))


@dataclass
class SessionConfig:
    mode: str = "field"  # field | simulated
    seed: int = 0
    truth_hypothesis_id: int = 4  # simulated mode only
    grid_shape: tuple[int, int] = (32, 32)
    hypotheses: tuple[HypothesisSpec, ...] = field(default_factory=default_hypotheses)
    null_prior: float = 0.0
    n_particles: int = 100
    ess_sweeps: int = 20
    evidence_sweeps: int = 6
    n_null_calibration: int = 150
    falsify_margin: float = 0.0
    econ: EconParams = field(default_factory=EconParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    kernel: gp.KernelParams = field(default_factory=gp.KernelParams)

    def geology_model(self) -> GeologyModel:
        return GeologyModel(grid_shape=self.grid_shape, kernel=self.kernel)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "truth_hypothesis_id": self.truth_hypothesis_id,
            "grid_shape": list(self.grid_shape),
            "hypotheses": [
                {
                    "id": h.id,
                    "n_grabens": h.n_grabens,
                    "n_geochem": h.n_geochem,
                    "prior_prob": h.prior_prob,
                }
                for h in self.hypotheses
            ],
            "null_prior": self.null_prior,
            "n_particles": self.n_particles,
            "ess_sweeps": self.ess_sweeps,
            "evidence_sweeps": self.evidence_sweeps,
            "n_null_calibration": self.n_null_calibration,
            "falsify_margin": self.falsify_margin,
            "econ": {
                "cutoff_grade": self.econ.cutoff_grade,
                "extraction_cost": self.econ.extraction_cost,
                "drill_cost": self.econ.drill_cost,
                "price_scale": self.econ.price_scale,
            },
            "planner": {
                "n_states": self.planner.n_states,
                "stride": self.planner.stride,
                "offset": self.planner.offset,
                "k_obs": self.planner.k_obs,
                "n_obs_draws": self.planner.n_obs_draws,
                "n_cluster_samples": self.planner.n_cluster_samples,
                "discount": self.planner.discount,
                "epsilon": self.planner.epsilon,
                "solver_budget_s": self.planner.solver_budget_s,
                "n_profit_mc": self.planner.n_profit_mc,
            },
            "kernel": {
                "marginal_std": self.kernel.marginal_std,
                "correlation_length": self.kernel.correlation_length,
                "smoothness": self.kernel.smoothness,
            },
        }


def validate_config(raw: dict[str, Any]) -> SessionConfig:
    """Build a SessionConfig from a plain dict, collecting field errors."""
    errors: list[dict] = []
    defaults = SessionConfig()

    def err(field_name: str, message: str) -> None:
        errors.append({"field": field_name, "message": message})

    mode = raw.get("mode", defaults.mode)
    if mode not in ("field", "simulated"):
        err("mode", f"must be 'field' or 'simulated', got {mode!r}")
    seed = raw.get("seed", defaults.seed)
    if not isinstance(seed, int) or seed < 0:
        err("seed", "must be a non-negative integer")

    grid_shape = tuple(raw.get("grid_shape", defaults.grid_shape))
    if len(grid_shape) != 2 or any(not isinstance(v, int) or v < 4 for v in grid_shape):
        err("grid_shape", "must be two integers >= 4")

    hypotheses: tuple[HypothesisSpec, ...] = defaults.hypotheses
    if "hypotheses" in raw:
        try:
            hypotheses = tuple(
                HypothesisSpec(
                    id=h["id"],
                    n_grabens=h["n_grabens"],
                    n_geochem=h["n_geochem"],
                    prior_prob=h["prior_prob"],
                )
                for h in raw["hypotheses"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            err("hypotheses", f"malformed hypothesis list: {exc}")
    null_prior = raw.get("null_prior", defaults.null_prior)
    if hypotheses:
        total = sum(h.prior_prob for h in hypotheses) + null_prior
        if abs(total - 1.0) > 1e-9:
            err("hypotheses.prior_prob", f"priors (incl. null) sum to {total}, expected 1")

    econ = defaults.econ
    if "econ" in raw:
        try:
            econ = EconParams(**raw["econ"])
        except (TypeError, ValueError) as exc:
            err("econ", str(exc))
    planner = defaults.planner
    if "planner" in raw:
        try:
            planner = PlannerConfig(**raw["planner"])
        except (TypeError, ValueError) as exc:
            err("planner", str(exc))
    kernel = defaults.kernel
    if "kernel" in raw:
        try:
            kernel = gp.KernelParams(**raw["kernel"])
        except (TypeError, ValueError) as exc:
            err("kernel", str(exc))

    for name in ("n_particles", "ess_sweeps", "n_null_calibration"):
        v = raw.get(name, getattr(defaults, name))
        if not isinstance(v, int) or v < 1:
            err(name, "must be a positive integer")
    evidence_sweeps = raw.get("evidence_sweeps", defaults.evidence_sweeps)
    if not isinstance(evidence_sweeps, int) or evidence_sweeps < 0:
        err("evidence_sweeps", "must be a non-negative integer")
    margin = raw.get("falsify_margin", defaults.falsify_margin)
    if margin < 0:
        err("falsify_margin", "must be >= 0")
    truth_hid = raw.get("truth_hypothesis_id", defaults.truth_hypothesis_id)
    if mode == "simulated" and hypotheses and truth_hid not in {h.id for h in hypotheses} and truth_hid != 0:
        # a truth outside the belief's hypothesis set is allowed (that is the
        # falsification scenario) as long as it names a default class
        if truth_hid not in {h.id for h in default_hypotheses()}:
            err("truth_hypothesis_id", f"unknown hypothesis id {truth_hid}")

    if errors:
        raise ConfigError(errors)
    return SessionConfig(
        mode=mode,
        seed=seed,
        truth_hypothesis_id=truth_hid,
        grid_shape=grid_shape,  # type: ignore[arg-type]
        hypotheses=hypotheses,
        null_prior=null_prior,
        n_particles=raw.get("n_particles", defaults.n_particles),
        ess_sweeps=raw.get("ess_sweeps", defaults.ess_sweeps),
        evidence_sweeps=evidence_sweeps,
        n_null_calibration=raw.get("n_null_calibration", defaults.n_null_calibration),
        falsify_margin=margin,
        econ=econ,
        planner=planner,
        kernel=kernel,
    )
