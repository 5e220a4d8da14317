"""Finite POMDP construction from the current belief.

States are conditional world draws from the belief; drill actions live on a
regular sub-grid of undrilled cells plus the two terminal decisions;
continuous (thickness, grade) observations are grouped by k-means into a
small cluster alphabet; the observation tensor holds empirical cluster
frequencies of noisy measurements per (state, drill action). Geology never
changes, so the transition model is the identity with absorbing terminals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import belief as bel
from . import geology

logger = logging.getLogger(__name__)

ABANDON = "abandon"
DEVELOP = "develop"
DRILL = "drill"


@dataclass(frozen=True)
class Action:
    kind: str
    cell: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (DRILL, ABANDON, DEVELOP):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if (self.kind == DRILL) != (self.cell is not None):
            raise ValueError("drill actions need a cell; terminals must not have one")

    @property
    def terminal(self) -> bool:
        return self.kind != DRILL

    def label(self) -> str:
        if self.kind == DRILL:
            return f"drill:{self.cell[0]},{self.cell[1]}"
        return self.kind


def enumerate_actions(
    grid_shape: tuple[int, int],
    stride: int,
    drilled: set[tuple[int, int]] | Sequence[tuple[int, int]] = (),
    offset: int | None = None,
) -> list[Action]:
    """Drill candidates on the stride lattice (minus drilled cells) plus the
    abandon/develop terminals, in row-major then terminal order."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    offset = stride // 2 if offset is None else offset
    drilled = set(drilled)
    actions = [
        Action(DRILL, (r, c))
        for r in range(offset, grid_shape[0], stride)
        for c in range(offset, grid_shape[1], stride)
        if (r, c) not in drilled
    ]
    actions.append(Action(ABANDON))
    actions.append(Action(DEVELOP))
    return actions


@dataclass
class ObsClusters:
    """k-means cluster alphabet over standardized (thickness, grade) pairs."""

    centroids: np.ndarray  # (k, 2) in original units
    scale_mean: np.ndarray  # (2,)
    scale_std: np.ndarray  # (2,)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def assign(self, samples: np.ndarray) -> np.ndarray:
        """Nearest-centroid index for each (n, 2) sample."""
        z = (np.atleast_2d(samples) - self.scale_mean) / self.scale_std
        zc = (self.centroids - self.scale_mean) / self.scale_std
        d2 = ((z[:, None, :] - zc[None, :, :]) ** 2).sum(axis=-1)
        return d2.argmin(axis=1)


def discretize_observations(
    samples: np.ndarray, k: int, rng: np.random.Generator
) -> ObsClusters:
    """Standard k-means (k-means++ seeding, Lloyd to convergence or 100
    iterations) over standardized samples; centroids return in original units."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if k < 1:
        raise ValueError("k must be >= 1")
    if samples.shape[0] < k:
        raise ValueError(f"need at least k={k} samples, got {samples.shape[0]}")
    n_distinct = np.unique(samples, axis=0).shape[0]
    if n_distinct < k:
        logger.warning("only %d distinct samples; reducing k from %d", n_distinct, k)
        k = n_distinct
    mean = samples.mean(axis=0)
    std = np.where(samples.std(axis=0) > 1e-12, samples.std(axis=0), 1.0)
    z = (samples - mean) / std

    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(z.shape[0])]
    d2 = ((z - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(z.shape[0], 1.0 / z.shape[0])
        centers[j] = z[rng.choice(z.shape[0], p=probs)]
        d2 = np.minimum(d2, ((z - centers[j]) ** 2).sum(axis=1))

    for _ in range(100):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        labels = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = z[labels == j]
            if members.shape[0]:
                new_centers[j] = members.mean(axis=0)
            else:  # re-seed empty cluster at the farthest point
                new_centers[j] = z[d2.min(axis=1).argmax()]
        if np.allclose(new_centers, centers, atol=1e-10):
            centers = new_centers
            break
        centers = new_centers
    return ObsClusters(centroids=centers * std + mean, scale_mean=mean, scale_std=std)


@dataclass
class DiscretePOMDP:
    """Finite POMDP over sampled world states.

    ``obs_probs[s, a, o]`` is the probability of observation cluster ``o``
    when drilling action ``a`` (index into drill actions only) in state ``s``.
    Terminal actions absorb; the geology component of the state never changes.
    """

    states: list[geology.GeoModel]
    actions: list[Action]
    clusters: ObsClusters
    obs_probs: np.ndarray  # (S, n_drill, K)
    rewards: np.ndarray  # (S, A)
    discount: float
    drill_indices: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        self.drill_indices = np.array(
            [i for i, a in enumerate(self.actions) if not a.terminal], dtype=int
        )
        row_sums = self.obs_probs.sum(axis=2)
        if self.obs_probs.size and not np.allclose(row_sums, 1.0, atol=1e-9):
            raise ValueError("observation tensor rows must sum to 1")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def action_index(self, action: Action) -> int:
        return self.actions.index(action)

    def dump(self, fh: TextIO) -> None:
        """Structured-text dump: header counts, action labels, then dense
        reward and observation tensors row-major with repr floats."""
        fh.write(f"discrete_pomdp v1\n")
        fh.write(
            f"counts {self.n_states} {self.n_actions} {self.clusters.k} {self.discount!r}\n"
        )
        fh.write("actions " + " ".join(a.label() for a in self.actions) + "\n")
        fh.write(
            "clusters "
            + " ".join(repr(float(v)) for v in self.clusters.centroids.ravel())
            + "\n"
        )
        fh.write("rewards " + " ".join(repr(float(v)) for v in self.rewards.ravel()) + "\n")
        fh.write(
            "obs_probs " + " ".join(repr(float(v)) for v in self.obs_probs.ravel()) + "\n"
        )


@dataclass(frozen=True)
class PlannerConfig:
    """Sizes for discretization and solving; chosen for desk-scale replans."""

    n_states: int = 100
    stride: int = 4
    offset: int | None = None
    k_obs: int = 8
    n_obs_draws: int = 200
    n_cluster_samples: int = 2000
    discount: float = 0.95
    epsilon: float = 0.1
    solver_budget_s: float = 20.0  # wall-clock guard only
    max_solver_iterations: int = 40  # binding cap: keeps replans deterministic
    n_profit_mc: int = 64


def build_discrete_pomdp(
    b: bel.Belief,
    cfg: PlannerConfig,
    e: geology.EconParams,
    rng: np.random.Generator,
) -> DiscretePOMDP:
    """Sample states from the belief, cluster observations, and assemble the
    observation and reward tensors."""
    if cfg.n_states < 2:
        raise ValueError("n_states must be >= 2")
    states = bel.sample_posterior_models(b, cfg.n_states, rng)
    actions = enumerate_actions(
        b.model.grid_shape, cfg.stride, b.drilled_cells(), cfg.offset
    )
    drill_cells = np.array(
        [a.cell for a in actions if not a.terminal], dtype=int
    ).reshape(-1, 2)
    n_drill = drill_cells.shape[0]
    S = len(states)

    th_at = np.empty((S, n_drill))
    g_at = np.empty((S, n_drill))
    for s, m in enumerate(states):
        th_at[s] = m.thickness[drill_cells[:, 0], drill_cells[:, 1]]
        g_at[s] = m.grade[drill_cells[:, 0], drill_cells[:, 1]]

    noise = b.model.noise_std
    if n_drill:
        n_train = min(cfg.n_cluster_samples, S * n_drill)
        si = rng.integers(0, S, size=n_train)
        ai = rng.integers(0, n_drill, size=n_train)
        train = np.column_stack([th_at[si, ai], g_at[si, ai]])
        train += rng.normal(0.0, noise, train.shape)
        clusters = discretize_observations(train, cfg.k_obs, rng)

        draws = np.stack([th_at, g_at], axis=-1)[:, :, None, :] + rng.normal(
            0.0, noise, (S, n_drill, cfg.n_obs_draws, 2)
        )
        labels = clusters.assign(draws.reshape(-1, 2)).reshape(S, n_drill, cfg.n_obs_draws)
        obs_probs = np.zeros((S, n_drill, clusters.k))
        for o in range(clusters.k):
            obs_probs[:, :, o] = (labels == o).mean(axis=2)
    else:
        clusters = ObsClusters(
            centroids=np.zeros((1, 2)), scale_mean=np.zeros(2), scale_std=np.ones(2)
        )
        obs_probs = np.zeros((S, 0, 1))

    rewards = np.zeros((S, len(actions)))
    for j, a in enumerate(actions):
        if a.kind == DRILL:
            rewards[:, j] = -e.drill_cost
        elif a.kind == DEVELOP:
            rewards[:, j] = [geology.profit(m, e, 0) for m in states]
        # abandon stays 0
    return DiscretePOMDP(
        states=states,
        actions=actions,
        clusters=clusters,
        obs_probs=obs_probs,
        rewards=rewards,
        discount=cfg.discount,
    )
