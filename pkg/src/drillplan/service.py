"""Campaign sessions: event-sourced persistence and the HTTP API.

A session is an append-only JSONL event log plus the configuration that
created it; rebuilding the in-memory state is a pure function of the two,
so replays are byte-identical. In simulated mode the service keeps a
hidden truth server-side and fills in observation values itself; no
endpoint ever returns the truth grids.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from . import belief as bel
from . import falsify, geology, solver
from .config import ConfigError, SessionConfig, validate_config


class ObservationIn(BaseModel):
    location: list[int]
    thickness: float | None = None
    grade: float | None = None
    graben: bool | None = None
    geochem: bool | None = None


class DecisionIn(BaseModel):
    decision: str

EVENT_CREATED = "created"
EVENT_OBSERVATION = "observation_added"
EVENT_RECOMMENDATION = "recommendation_issued"
EVENT_DECISION = "decision_made"


class SessionNotFound(KeyError):
    pass


class SessionTerminal(RuntimeError):
    pass


@dataclass
class SessionState:
    """In-memory state rebuilt by replaying the event log."""

    session_id: str
    config: SessionConfig
    belief: bel.Belief
    null_model: falsify.NullModel
    truth: geology.GeoModel | None
    events: list[dict] = field(default_factory=list)
    decision: str | None = None
    last_recommendation: dict | None = None

    @property
    def terminal(self) -> bool:
        return self.decision is not None

    @property
    def n_observations(self) -> int:
        return len(self.belief.observations)


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def build_initial_state(session_id: str, cfg: SessionConfig) -> SessionState:
    model = cfg.geology_model()
    null_model = falsify.build_null(
        cfg.hypotheses, cfg.n_null_calibration, _rng_for(cfg.seed, 1), model
    )
    b = bel.init_belief(
        cfg.hypotheses,
        cfg.n_particles,
        _rng_for(cfg.seed, 2),
        model,
        null_model=null_model,
        null_prior=cfg.null_prior,
    )
    truth = None
    if cfg.mode == "simulated":
        truth_spec = next(
            h for h in geology.default_hypotheses() if h.id == cfg.truth_hypothesis_id
        )
        truth = geology.sample_truth(truth_spec, _rng_for(cfg.seed, 3), model)
    return SessionState(
        session_id=session_id,
        config=cfg,
        belief=b,
        null_model=null_model,
        truth=truth,
    )


def apply_observation(state: SessionState, payload: dict) -> bel.DrillObservation:
    """Validate + apply one observation event payload to the belief."""
    location = (int(payload["location"][0]), int(payload["location"][1]))
    shape = state.config.grid_shape
    if not (0 <= location[0] < shape[0] and 0 <= location[1] < shape[1]):
        raise ValueError(f"location {location} outside the {shape} grid")
    step = state.n_observations
    o = bel.DrillObservation(
        location=location,
        thickness_obs=float(payload["thickness"]),
        grade_obs=float(payload["grade"]),
        graben_obs=bool(payload["graben"]),
        geochem_obs=bool(payload["geochem"]),
        step_index=step,
    )
    state.belief = bel.update_belief(
        state.belief,
        o,
        state.config.ess_sweeps,
        _rng_for(state.config.seed, 4, step),
        evidence_sweeps=state.config.evidence_sweeps,
    )
    state.last_recommendation = None
    return o


def simulate_observation_payload(state: SessionState, location) -> dict:
    """Fill observation values from the hidden truth (simulated mode)."""
    if state.truth is None:
        raise ValueError("session is not in simulated mode")
    r, c = int(location[0]), int(location[1])
    rng = _rng_for(state.config.seed, 5, state.n_observations)
    noise = state.config.geology_model().noise_std
    return {
        "location": [r, c],
        "thickness": float(state.truth.thickness[r, c] + rng.normal(0, noise)),
        "grade": float(state.truth.grade[r, c] + rng.normal(0, noise)),
        "graben": bool(state.truth.graben_mask[r, c]),
        "geochem": bool(state.truth.geochem_mask[r, c]),
    }


def compute_recommendation(state: SessionState) -> dict:
    """Plan the next action; deterministic given (config seed, step count)."""
    step = state.n_observations
    action, diagnostics = solver.plan_step(
        state.belief,
        state.config.planner,
        state.config.econ,
        _rng_for(state.config.seed, 6, step),
    )
    mean, std = bel.expected_profit(
        state.belief,
        state.config.econ,
        state.config.planner.n_profit_mc,
        _rng_for(state.config.seed, 7, step),
    )
    return {
        "action": {"kind": action.kind, "cell": list(action.cell) if action.cell else None},
        "expected_profit": {"mean": mean, "std": std},
        "diagnostics": {
            k: v for k, v in diagnostics.items() if k not in ("build_seconds", "solve_seconds")
        },
        "at_observation_count": step,
    }


def replay(session_id: str, cfg: SessionConfig, events: list[dict]) -> SessionState:
    """Pure rebuild of session state from config + event log."""
    state = build_initial_state(session_id, cfg)
    for event in events:
        kind = event["type"]
        if kind == EVENT_CREATED:
            continue
        if kind == EVENT_OBSERVATION:
            apply_observation(state, event["observation"])
        elif kind == EVENT_RECOMMENDATION:
            state.last_recommendation = event["recommendation"]
        elif kind == EVENT_DECISION:
            state.decision = event["decision"]
        else:
            raise ValueError(f"unknown event type {kind!r}")
        state.events.append(event)
    return state


def belief_summary(state: SessionState, include_grids: bool = True) -> dict:
    b = state.belief
    out: dict[str, Any] = {
        "session_id": state.session_id,
        "mode": state.config.mode,
        "n_observations": state.n_observations,
        "terminal": state.terminal,
        "decision": state.decision,
        "hypothesis_ids": [h.id for h in b.hypotheses] + [0],
        "hypothesis_weights": [float(w) for w in b.weights],
        "marginal_loglik": [float(v) for v in b.marginal_loglik],
        "loglik_trace": [[float(v) for v in row] for row in b.loglik_trace],
        "observations": [
            {
                "location": list(o.location),
                "thickness": o.thickness_obs,
                "grade": o.grade_obs,
                "graben": o.graben_obs,
                "geochem": o.geochem_obs,
                "step_index": o.step_index,
            }
            for o in b.observations
        ],
    }
    if include_grids:
        grids = bel.predictive_grids(b, particle_stride=4)
        out["grids"] = {k: [[float(v) for v in row] for row in g] for k, g in grids.items()}
        mineral = grids["th_mean"] * grids["g_mean"]
        out["grids"]["mineralization"] = [[float(v) for v in row] for row in mineral]
    return out


def falsification_summary(state: SessionState) -> dict:
    status = falsify.falsification_status(
        state.belief, state.null_model, state.config.falsify_margin
    )
    return {
        "session_id": state.session_id,
        "hypothesis_ids": list(status.hypothesis_ids),
        "falsified": list(status.falsified),
        "hypothesis_logliks": list(status.hypothesis_logliks),
        "null_loglik": status.null_loglik,
        "all_falsified": status.all_falsified,
        "margin": state.config.falsify_margin,
        "loglik_trace": [[float(v) for v in row] for row in state.belief.loglik_trace],
    }


class SessionStore:
    """One JSONL event-log file per session under a data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._live: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _log_path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.jsonl"))

    def create(self, raw_config: dict) -> SessionState:
        cfg = validate_config(raw_config)
        session_id = uuid.uuid4().hex[:12]
        state = build_initial_state(session_id, cfg)
        event = {"type": EVENT_CREATED, "config": cfg.to_dict()}
        state.events.append(event)
        self._append(session_id, event)
        self._live[session_id] = state
        return state

    def get(self, session_id: str) -> SessionState:
        state = self._live.get(session_id)
        if state is not None:
            return state
        path = self._log_path(session_id)
        if not path.exists():
            raise SessionNotFound(session_id)
        events = [json.loads(line) for line in path.read_text().splitlines() if line]
        cfg = validate_config(events[0]["config"])
        state = replay(session_id, cfg, events)
        self._live[session_id] = state
        return state

    def _append(self, session_id: str, event: dict) -> None:
        with self._log_path(session_id).open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def add_observation(self, session_id: str, payload: dict) -> SessionState:
        with self.lock(session_id):
            state = self.get(session_id)
            if state.terminal:
                raise SessionTerminal("session terminal")
            if state.truth is not None and "thickness" not in payload:
                payload = simulate_observation_payload(state, payload["location"])
            apply_observation(state, payload)
            event = {"type": EVENT_OBSERVATION, "observation": payload}
            state.events.append(event)
            self._append(session_id, event)
            return state

    def recommendation(self, session_id: str) -> dict:
        with self.lock(session_id):
            state = self.get(session_id)
            if state.terminal:
                raise SessionTerminal("session terminal")
            cached = state.last_recommendation
            if cached is not None and cached["at_observation_count"] == state.n_observations:
                return cached
            rec = compute_recommendation(state)
            state.last_recommendation = rec
            event = {"type": EVENT_RECOMMENDATION, "recommendation": rec}
            state.events.append(event)
            self._append(session_id, event)
            return rec

    def decide(self, session_id: str, decision: str) -> SessionState:
        if decision not in ("develop", "abandon"):
            raise ValueError(f"decision must be develop or abandon, got {decision!r}")
        with self.lock(session_id):
            state = self.get(session_id)
            if state.terminal:
                raise SessionTerminal("decision already recorded")
            state.decision = decision
            event = {"type": EVENT_DECISION, "decision": decision}
            state.events.append(event)
            self._append(session_id, event)
            return state


def create_app(store: SessionStore):
    """FastAPI application exposing the session endpoints."""
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="drillplan session service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _get(session_id: str) -> SessionState:
        try:
            return store.get(session_id)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions", status_code=201)
    def create_session(config: dict | None = None):
        try:
            state = store.create(config or {})
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail={"errors": exc.errors})
        return belief_summary(state)

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return belief_summary(_get(session_id), include_grids=False)

    @app.post("/sessions/{session_id}/observations")
    def add_observation(session_id: str, body: ObservationIn):
        _get(session_id)
        payload = {"location": body.location}
        if body.thickness is not None:
            payload.update(
                thickness=body.thickness, grade=body.grade,
                graben=body.graben, geochem=body.geochem,
            )
        try:
            state = store.add_observation(session_id, payload)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except bel.DuplicateLocationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        summary = belief_summary(state)
        summary["falsification"] = falsification_summary(state)
        return summary

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(session_id: str):
        _get(session_id)
        try:
            return store.recommendation(session_id)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/sessions/{session_id}/decision")
    def record_decision(session_id: str, body: DecisionIn):
        _get(session_id)
        try:
            state = store.decide(session_id, body.decision)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        summary = belief_summary(state, include_grids=False)
        mean, std = bel.expected_profit(
            state.belief,
            state.config.econ,
            state.config.planner.n_profit_mc,
            _rng_for(state.config.seed, 8, state.n_observations),
        )
        summary["final_expected_profit"] = {"mean": mean, "std": std}
        return summary

    @app.get("/sessions/{session_id}/belief")
    def get_belief(session_id: str):
        return belief_summary(_get(session_id))

    @app.get("/sessions/{session_id}/falsification")
    def get_falsification(session_id: str):
        return falsification_summary(_get(session_id))

    return app
