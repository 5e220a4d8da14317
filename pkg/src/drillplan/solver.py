"""Offline point-based POMDP solver with bound-guided belief sampling.

Maintains a lower bound as a set of alpha vectors (seeded by blind
policies) and a sawtooth upper bound seeded by the fully observable value.
Each iteration samples a path of reachable beliefs descending where the
bound gap exceeds the depth-scaled target, backs alpha vectors up along the
path in reverse, tightens the upper bound at the visited points, and prunes
alpha vectors that are maximal nowhere among the witness set. Identity
transitions let observation updates act directly on the state ensemble.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import belief as bel
from .discretize import (
    ABANDON,
    DEVELOP,
    Action,
    DiscretePOMDP,
    PlannerConfig,
    build_discrete_pomdp,
)
from . import geology

MAX_PATH_DEPTH = 120


@dataclass
class AlphaPolicy:
    """Piecewise-linear lower bound: value vectors with associated actions."""

    alphas: np.ndarray  # (n, S)
    actions: list[int]  # action index per alpha
    lower_bound_value: float
    upper_bound_value: float
    converged: bool = True
    iterations: int = 0
    gap_history: list[tuple[float, float]] = field(default_factory=list)

    def value(self, b: np.ndarray) -> float:
        return float((self.alphas @ b).max())


def _check_simplex(b: np.ndarray, n: int) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (n,) or np.any(b < -1e-9) or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("belief is not a valid simplex over the states")
    return b


def initial_bounds(p: DiscretePOMDP) -> tuple[np.ndarray, list[int], np.ndarray]:
    """Blind-policy alpha vectors (lower) and per-state MDP values (upper).

    With identity transitions the fully observable optimum never drills:
    a drill step costs now and changes nothing, so V(s) is the best terminal
    reward (develop profit or abandon 0), which upper-bounds the POMDP value.
    """
    alphas = []
    actions = []
    for j, a in enumerate(p.actions):
        if a.terminal:
            alphas.append(p.rewards[:, j].copy())
            actions.append(j)
        elif p.discount < 1.0:
            alphas.append(p.rewards[:, j] / (1.0 - p.discount))
            actions.append(j)
    terminal_idx = [j for j, a in enumerate(p.actions) if a.terminal]
    v_mdp = p.rewards[:, terminal_idx].max(axis=1)
    if p.discount < 1.0:
        drill_idx = [j for j, a in enumerate(p.actions) if not a.terminal]
        if drill_idx:
            drill_forever = p.rewards[:, drill_idx].max(axis=1) / (1.0 - p.discount)
            v_mdp = np.maximum(v_mdp, drill_forever)
    return np.array(alphas), actions, v_mdp


class SawtoothUpperBound:
    """Point-set upper bound with sawtooth interpolation over the corners.

    Evaluations are memoized per belief and tightened incrementally: a
    cached value only needs to be compared against points added since it
    was computed (points never loosen the bound), which keeps repeated
    evaluation of recurring reachable beliefs cheap. Lowering an existing
    point invalidates the memo (values could become stale otherwise).
    """

    def __init__(self, corner_values: np.ndarray):
        self.corners = corner_values
        self._beliefs: list[np.ndarray] = []
        self._values: list[float] = []
        self._gains: list[float] = []  # value - corner interpolation base
        self._index: dict[bytes, int] = {}
        self._eval_cache: dict[bytes, tuple[float, int]] = {}
        self._stack: np.ndarray | None = None
        self._stack_len = 0

    def _matrix(self) -> np.ndarray:
        if self._stack is None or self._stack_len != len(self._beliefs):
            self._stack = np.asarray(self._beliefs)
            self._stack_len = len(self._beliefs)
        return self._stack

    def _interp(self, b: np.ndarray, v0: float, start: int) -> float:
        if start >= len(self._beliefs):
            return np.inf
        B = self._matrix()[start:]
        gains = np.asarray(self._gains[start:])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(B > 1e-12, b[None, :] / B, np.inf)
        c = ratios.min(axis=1)
        return float((v0 + c * gains).min())

    def value(self, b: np.ndarray) -> float:
        key = b.tobytes()
        v0 = float(b @ self.corners)
        cached = self._eval_cache.get(key)
        if cached is None:
            v, seen = v0, 0
        else:
            v, seen = cached
        v = min(v, self._interp(b, v0, seen))
        self._eval_cache[key] = (v, len(self._beliefs))
        return v

    def values(self, bs: np.ndarray) -> np.ndarray:
        return np.array([self.value(b) for b in np.atleast_2d(bs)])

    def add(self, b: np.ndarray, value: float) -> None:
        value = min(value, float(b @ self.corners))
        key = b.tobytes()
        at = self._index.get(key)
        if at is None:
            self._index[key] = len(self._beliefs)
            self._beliefs.append(b.copy())
            self._values.append(value)
            self._gains.append(value - float(b @ self.corners))
        elif value < self._values[at]:
            self._values[at] = value
            self._gains[at] = value - float(self._beliefs[at] @ self.corners)
            self._eval_cache.clear()


def backup(
    b: np.ndarray, alphas: np.ndarray, alpha_actions: list[int], p: DiscretePOMDP
) -> tuple[np.ndarray, int]:
    """Standard point-based backup at one belief; returns the best new alpha
    vector and its action index."""
    b = _check_simplex(b, p.n_states)
    best_val = -np.inf
    best = None
    for j, a in enumerate(p.actions):
        if a.terminal:
            cand = p.rewards[:, j]
        else:
            di = int(np.where(p.drill_indices == j)[0][0])
            P = p.obs_probs[:, di, :]  # (S, K)
            W = b[:, None] * P  # (S, K)
            scores = alphas @ W  # (n, K)
            idx = scores.argmax(axis=0)  # best alpha per observation branch
            cont = (P * alphas[idx].T).sum(axis=1)
            cand = p.rewards[:, j] + p.discount * cont
        val = float(cand @ b)
        if val > best_val + 1e-12 or best is None:
            best_val = val
            best = (cand, j)
    return best[0].copy(), best[1]


def _upper_q(b: np.ndarray, ub: SawtoothUpperBound, p: DiscretePOMDP, j: int):
    """Upper-bound Q value of action j at belief b, with child beliefs."""
    a = p.actions[j]
    r = float(p.rewards[:, j] @ b)
    if a.terminal:
        return r, [], []
    di = int(np.where(p.drill_indices == j)[0][0])
    P = p.obs_probs[:, di, :]
    w = b[:, None] * P
    po = w.sum(axis=0)  # (K,)
    live = np.flatnonzero(po > 1e-12)
    children_mat = w[:, live].T / po[live][:, None]  # (m, S)
    child_vals = ub.values(children_mat)
    q = r + p.discount * float(po[live] @ child_vals)
    return q, list(children_mat), list(po[live])


class _NodeExpansion:
    """All-action lookahead at one belief, batched into matrix ops."""

    def __init__(self, b: np.ndarray, ub: SawtoothUpperBound, p: DiscretePOMDP):
        self.p = p
        self.b = b
        S = p.n_states
        K = p.clusters.k
        drill = p.drill_indices
        self.q_upper = np.empty(p.n_actions)
        terminal_mask = np.array([a.terminal for a in p.actions])
        self.q_upper[terminal_mask] = (p.rewards[:, terminal_mask].T @ b)
        if drill.size:
            W = b[:, None, None] * p.obs_probs  # (S, A_d, K)
            po = W.sum(axis=0)  # (A_d, K)
            flat = W.reshape(S, -1).T  # (A_d*K, S)
            safe = np.where(po.reshape(-1) > 1e-12, po.reshape(-1), 1.0)
            children = flat / safe[:, None]
            vals = ub.values(children)  # (A_d*K,)
            vals = np.where(po.reshape(-1) > 1e-12, vals, 0.0)
            cont = (po * vals.reshape(po.shape)).sum(axis=1)
            self.q_upper[drill] = p.rewards[:, drill].T @ b + p.discount * cont
            self._po = po
            self._children = children.reshape(drill.size, K, S)
            self._child_ub = vals.reshape(po.shape)

    def best_action(self) -> int:
        return int(np.argmax(self.q_upper))

    def children_of(self, j: int):
        """(child beliefs, probabilities, upper-bound values) of action j."""
        if self.p.actions[j].terminal:
            return [], np.empty(0), np.empty(0)
        di = int(np.where(self.p.drill_indices == j)[0][0])
        po = self._po[di]
        live = np.flatnonzero(po > 1e-12)
        return self._children[di, live], po[live], self._child_ub[di, live]


def solve(
    p: DiscretePOMDP,
    b0: np.ndarray,
    epsilon: float = 0.1,
    budget_s: float = 5.0,
    max_iterations: int = 2000,
) -> AlphaPolicy:
    """Bound-guided point-based solving until gap(b0) <= epsilon or budget.

    The lower bound at b0 never decreases and the upper bound never
    increases; exhaustion of the budget returns the best policy with
    ``converged=False`` rather than an error.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    b0 = _check_simplex(np.asarray(b0, dtype=float), p.n_states)
    alphas, alpha_actions, v_mdp = initial_bounds(p)
    ub = SawtoothUpperBound(v_mdp)
    witness: list[np.ndarray] = [b0]
    gap_history: list[tuple[float, float]] = []
    start = time.monotonic()
    iterations = 0
    converged = False

    while iterations < max_iterations:
        iterations += 1
        lb0 = float((alphas @ b0).max())
        ub0 = ub.value(b0)
        gap_history.append((lb0, ub0))
        if ub0 - lb0 <= epsilon:
            converged = True
            break
        if time.monotonic() - start > budget_s:
            break

        # sample a path guided by upper-bound actions and excess gap
        path = []
        b = b0
        depth = 0
        while depth < MAX_PATH_DEPTH:
            lb_here = float((alphas @ b).max())
            ub_here = ub.value(b)
            target = epsilon * p.discount ** (-depth) if p.discount < 1.0 else epsilon
            if ub_here - lb_here <= target:
                break
            path.append(b)
            node = _NodeExpansion(b, ub, p)
            children, probs, child_ubs = node.children_of(node.best_action())
            if len(children) == 0:  # terminal action is upper-bound optimal
                break
            child_target = (
                epsilon * p.discount ** (-(depth + 1)) if p.discount < 1.0 else epsilon
            )
            child_lbs = (alphas @ children.T).max(axis=0)
            excess = probs * (child_ubs - child_lbs - child_target)
            if excess.max() <= 0:
                break
            b = children[int(np.argmax(excess))]
            depth += 1

        if not path:
            # root already within target but gap(b0) > epsilon: tighten at b0
            path = [b0]

        # backup in reverse; tighten the upper bound at each visited point
        for b_visit in reversed(path):
            new_alpha, act = backup(b_visit, alphas, alpha_actions, p)
            alphas = np.vstack([alphas, new_alpha])
            alpha_actions.append(act)
            ub.add(b_visit, float(_NodeExpansion(b_visit, ub, p).q_upper.max()))
            witness.append(b_visit)

        if iterations % 10 == 0:
            alphas, alpha_actions = _prune(alphas, alpha_actions, witness, p)

    lb0 = float((alphas @ b0).max())
    ub0 = ub.value(b0)
    gap_history.append((lb0, ub0))
    alphas, alpha_actions = _prune(alphas, alpha_actions, witness, p)
    return AlphaPolicy(
        alphas=alphas,
        actions=alpha_actions,
        lower_bound_value=float((alphas @ b0).max()),
        upper_bound_value=ub0,
        converged=converged,
        iterations=iterations,
        gap_history=gap_history,
    )


def _prune(alphas: np.ndarray, actions: list[int], witness: list[np.ndarray], p):
    """Keep alpha vectors that are argmax at some witness belief or corner."""
    W = np.asarray(witness)
    corners = np.eye(p.n_states)
    pts = np.vstack([W, corners])
    scores = alphas @ pts.T  # (n, m)
    keep = np.zeros(alphas.shape[0], dtype=bool)
    keep[scores.argmax(axis=0)] = True
    before = scores.max(axis=0)
    kept_alphas = alphas[keep]
    kept_actions = [a for a, k in zip(actions, keep) if k]
    after = (kept_alphas @ pts.T).max(axis=0)
    if not np.all(after >= before - 1e-9):
        raise AssertionError("pruning decreased the lower bound at a witness point")
    return kept_alphas, kept_actions


def act(policy: AlphaPolicy, b: np.ndarray) -> int:
    """Action of the maximizing alpha vector; ties break to the lowest
    action index."""
    if policy.alphas.shape[0] == 0:
        raise ValueError("policy has no alpha vectors")
    vals = policy.alphas @ np.asarray(b, dtype=float)
    best = vals.max()
    tied = [policy.actions[i] for i in np.flatnonzero(vals >= best - 1e-12)]
    return min(tied)


def simulate_policy(
    p: DiscretePOMDP,
    policy: AlphaPolicy,
    b0: np.ndarray,
    rng: np.random.Generator,
    n_rollouts: int = 1000,
    max_steps: int = 100,
) -> np.ndarray:
    """Discounted returns of running the policy on the discrete model."""
    returns = np.empty(n_rollouts)
    for i in range(n_rollouts):
        s = rng.choice(p.n_states, p=b0)
        b = b0.copy()
        total = 0.0
        scale = 1.0
        for _ in range(max_steps):
            j = act(policy, b)
            total += scale * float(p.rewards[s, j])
            if p.actions[j].terminal:
                break
            di = int(np.where(p.drill_indices == j)[0][0])
            o = rng.choice(p.clusters.k, p=p.obs_probs[s, di])
            w = b * p.obs_probs[:, di, o]
            b = w / w.sum()
            scale *= p.discount
        returns[i] = total
    return returns


def plan_step(
    b: bel.Belief,
    cfg: PlannerConfig,
    e: geology.EconParams,
    rng: np.random.Generator,
) -> tuple[Action, dict]:
    """Discretize the belief, solve, and act at the uniform ensemble belief."""
    t0 = time.monotonic()
    pomdp = build_discrete_pomdp(b, cfg, e, rng)
    t_build = time.monotonic() - t0
    b0 = np.full(pomdp.n_states, 1.0 / pomdp.n_states)
    t0 = time.monotonic()
    policy = solve(
        pomdp,
        b0,
        epsilon=cfg.epsilon,
        budget_s=cfg.solver_budget_s,
        max_iterations=cfg.max_solver_iterations,
    )
    t_solve = time.monotonic() - t0
    action = pomdp.actions[act(policy, b0)]
    best_drill = _best_drill_action(pomdp, policy, b0)
    diagnostics = {
        "lower_bound": policy.lower_bound_value,
        "upper_bound": policy.upper_bound_value,
        "gap": policy.upper_bound_value - policy.lower_bound_value,
        "converged": policy.converged,
        "iterations": policy.iterations,
        "n_alphas": int(policy.alphas.shape[0]),
        "n_actions": pomdp.n_actions,
        "build_seconds": t_build,
        "solve_seconds": t_solve,
        "best_drill_cell": best_drill.cell if best_drill else None,
    }
    return action, diagnostics


def _best_drill_action(p: DiscretePOMDP, policy: AlphaPolicy, b: np.ndarray) -> Action | None:
    """Highest-valued drill action at b (for studies that drill past the
    agent's terminal recommendation)."""
    drill_set = set(p.drill_indices.tolist())
    if not drill_set:
        return None
    vals = policy.alphas @ b
    best_j, best_v = None, -np.inf
    for v, j in zip(vals, policy.actions):
        if j in drill_set and v > best_v + 1e-12:
            best_v, best_j = v, j
    if best_j is None:
        best_j = int(p.drill_indices[0])
    return p.actions[best_j]


def dump_policy(policy: AlphaPolicy, fh) -> None:
    """Structured-text dump of the alpha set in the same family as the
    discrete-POMDP dump."""
    n, s = policy.alphas.shape
    fh.write("alpha_policy v1\n")
    fh.write(f"counts {n} {s}\n")
    fh.write("bounds " + repr(policy.lower_bound_value) + " " + repr(policy.upper_bound_value) + "\n")
    fh.write("actions " + " ".join(str(a) for a in policy.actions) + "\n")
    fh.write("alphas " + " ".join(repr(float(v)) for v in policy.alphas.ravel()) + "\n")
