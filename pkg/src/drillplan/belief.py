"""Hierarchical belief over structural hypotheses and domain geometry.

The belief carries a weight per hypothesis (plus a null entry), a particle
ensemble of geometry parameters per hypothesis, and the accumulated drill
observations. Each update refreshes the particles with elliptical slice
sampling against the full posterior and advances a running estimate of each
hypothesis's marginal data log-likelihood, accumulated one observation at a
time: the increment for a new hole is the particle-averaged conditional
likelihood of that hole given all earlier ones. Hypothesis weights are
proportional to prior times marginal likelihood.

Given a geometry, the likelihood factorizes into domain-membership indicator
terms at the drilled cells (a mismatch contributes a -1e9 sentinel per
boolean) and Gaussian-process terms for thickness and grade. The in-domain
and out-of-domain populations of each field are independent GPs, so the GP
terms split into per-population blocks whose means are set by membership.
For any geometry consistent with the observed memberships those blocks
coincide with the observed boolean pattern, which lets the Gaussian factor
be computed once per observation set and reused across particle evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import falsify, geology, gp
from .geology import GeologyModel, GeometryParams, HypothesisSpec

MISMATCH_SENTINEL = -1e9
DEFAULT_N_PARTICLES = 100
DEFAULT_ESS_SWEEPS = 20
DEFAULT_EVIDENCE_SWEEPS = 6
MAX_ESS_SHRINKS = 1000


class DuplicateLocationError(ValueError):
    """The requested drill location was already observed."""


@dataclass(frozen=True)
class DrillObservation:
    """One borehole: field values plus directly observed domain memberships."""

    location: tuple[int, int]
    thickness_obs: float
    grade_obs: float
    graben_obs: bool
    geochem_obs: bool
    step_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "location", (int(self.location[0]), int(self.location[1])))


_NEXT_VERTEX = np.roll(np.arange(geology.N_POLY_VERTICES), -1)


def _ray_cast(px: np.ndarray, py: np.ndarray, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    """Even-odd membership of points (px, py) in the polygon (vx, vy);
    allocation-light variant of the rasterizer's test for small point sets."""
    x1 = vx[_NEXT_VERTEX]
    y1 = vy[_NEXT_VERTEX]
    crossing = (vy[None, :] <= py[:, None]) != (y1[None, :] <= py[:, None])
    dy = y1 - vy
    dy = np.where(dy == 0.0, 1.0, dy)
    xs = vx[None, :] + (py[:, None] - vy[None, :]) / dy[None, :] * (x1 - vx)[None, :]
    return ((crossing & (px[:, None] < xs)).sum(axis=1) % 2).astype(bool)


def _membership_impl(x, n_grabens, n_geochem, rows, cols, tfrac, cosv, sinv,
                     floor, grab_obs, chem_obs, grab_out, chem_out):
    """Domain memberships of the drilled cells under a raw geometry vector,
    plus the mismatch count against the observed booleans. Scalar loops so
    the JIT can compile it; also correct (if slow) as plain Python."""
    n = rows.shape[0]
    nv = cosv.shape[0]
    mism = 0
    for i in range(n):
        g = False
        for j in range(n_grabens):
            b_s = x[4 * j]
            b_w = x[4 * j + 1]
            t_s = x[4 * j + 2]
            t_w = x[4 * j + 3]
            start = b_s + tfrac[i] * (t_s - b_s)
            width = b_w + tfrac[i] * (t_w - b_w)
            if width < floor:
                width = floor
            if cols[i] >= start and cols[i] < start + width:
                g = True
                break
        grab_out[i] = g
        if g != grab_obs[i]:
            mism += 1
    base = 4 * n_grabens
    for i in range(n):
        inside = False
        for j in range(n_geochem):
            off = base + 12 * j
            cx = x[off]
            cy = x[off + 1]
            rmax = floor
            for m in range(nv):
                rv = x[off + 2 + m]
                if rv > rmax:
                    rmax = rv
            dx = rows[i] - cx
            dy = cols[i] - cy
            if dx * dx + dy * dy > rmax * rmax:
                continue
            crossings = 0
            for m in range(nv):
                m1 = m + 1 if m + 1 < nv else 0
                r0 = x[off + 2 + m]
                if r0 < floor:
                    r0 = floor
                r1 = x[off + 2 + m1]
                if r1 < floor:
                    r1 = floor
                vx0 = cx + r0 * cosv[m]
                vy0 = cy + r0 * sinv[m]
                vx1 = cx + r1 * cosv[m1]
                vy1 = cy + r1 * sinv[m1]
                if (vy0 <= cols[i]) != (vy1 <= cols[i]):
                    xs = vx0 + (cols[i] - vy0) / (vy1 - vy0) * (vx1 - vx0)
                    if rows[i] < xs:
                        crossings += 1
            if crossings % 2 == 1:
                inside = True
                break
        chem_out[i] = inside
        if inside != chem_obs[i]:
            mism += 1
    return mism


try:
    from numba import njit

    _membership_kernel = njit(cache=True)(_membership_impl)
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _membership_kernel = _membership_impl


class ObsContext:
    """Precomputed arrays and cached Gaussian terms for one observation set."""

    def __init__(self, model: GeologyModel, observations: Sequence[DrillObservation]):
        self.model = model
        self.observations = tuple(observations)
        n = len(self.observations)
        self.locs = np.array([o.location for o in self.observations], dtype=float).reshape(n, 2)
        self.th = np.array([o.thickness_obs for o in self.observations], dtype=float)
        self.g = np.array([o.grade_obs for o in self.observations], dtype=float)
        self.grab_obs = np.array([o.graben_obs for o in self.observations], dtype=bool)
        self.chem_obs = np.array([o.geochem_obs for o in self.observations], dtype=bool)
        self._rows = self.locs[:, 0] / max(model.grid_shape[0] - 1, 1)
        self._cols = self.locs[:, 1].copy()
        self._rows_raw = self.locs[:, 0].copy()
        self._grab_buf = np.zeros(n, dtype=np.bool_)
        self._chem_buf = np.zeros(n, dtype=np.bool_)
        self._gauss_cache: dict[bytes, float] = {}
        self._consistent_gauss: float | None = None

    def __len__(self) -> int:
        return len(self.observations)

    def _field_block_loglik(
        self, values: np.ndarray, membership: np.ndarray, means: tuple[float, float]
    ) -> float:
        total = 0.0
        for flag, mean in ((False, means[0]), (True, means[1])):
            idx = np.flatnonzero(membership == flag)
            if idx.size == 0:
                continue
            obs = gp.GpObservationSet(self.locs[idx], values[idx], self.model.noise_std)
            total += gp.gp_log_marginal(obs, mean, self.model.kernel)
        return total

    def gaussian_loglik(self, grab_membership: np.ndarray, chem_membership: np.ndarray) -> float:
        """Thickness + grade GP terms for the given memberships at the holes."""
        key = np.packbits(
            np.concatenate([grab_membership, chem_membership])
        ).tobytes()
        cached = self._gauss_cache.get(key)
        if cached is None:
            cached = self._field_block_loglik(
                self.th, grab_membership, self.model.thickness_means
            ) + self._field_block_loglik(self.g, chem_membership, self.model.grade_means)
            self._gauss_cache[key] = cached
        return cached

    def loglik_vector(
        self, n_grabens: int, n_geochem: int, x: np.ndarray, full: bool = False
    ) -> float:
        """Log-likelihood of all observations under a raw geometry vector.

        With ``full=False`` membership mismatches short-circuit to the
        sentinel alone: at that scale the Gaussian terms only matter for
        zero-posterior-mass configurations, and skipping them keeps the
        slice-sampling hot path cheap. ``full=True`` always adds the
        Gaussian terms under the geometry's own membership pattern, which
        evidence averaging needs so that sentinel differences cancel into
        honest conditional densities.
        """
        if len(self.observations) == 0:
            return 0.0
        mism = _membership_kernel(
            np.asarray(x, dtype=float),
            n_grabens,
            n_geochem,
            self._rows_raw,
            self._cols,
            self._rows,
            geology._POLY_COS,
            geology._POLY_SIN,
            geology.WIDTH_FLOOR,
            self.grab_obs,
            self.chem_obs,
            self._grab_buf,
            self._chem_buf,
        )
        if mism == 0:
            if self._consistent_gauss is None:
                self._consistent_gauss = self.gaussian_loglik(self.grab_obs, self.chem_obs)
            return self._consistent_gauss
        if not full:
            return MISMATCH_SENTINEL * mism
        return MISMATCH_SENTINEL * mism + self.gaussian_loglik(
            self._grab_buf.copy(), self._chem_buf.copy()
        )

    def loglik_geometry(self, geom: GeometryParams, full: bool = False) -> float:
        return self.loglik_vector(
            geom.n_grabens, geom.n_geochem, np.asarray(geom.vector), full=full
        )


def loglik_given_geometry(
    observations: Sequence[DrillObservation],
    h: HypothesisSpec,
    geom: GeometryParams,
    model: GeologyModel | None = None,
) -> float:
    """Joint log-likelihood of the observations under one fixed geometry.

    Sum of the thickness and grade GP terms and the two domain-membership
    delta terms; each membership mismatch contributes a -1e9 sentinel.
    """
    model = model or GeologyModel()
    return ObsContext(model, observations).loglik_geometry(geom)


def hypothesis_loglik(
    observations: Sequence[DrillObservation],
    h: HypothesisSpec,
    particles: Sequence[GeometryParams],
    weights: np.ndarray | None = None,
    model: GeologyModel | None = None,
) -> float:
    """Log of the weighted particle average of the geometry likelihood.

    Monte Carlo marginalization over the domain geometry; computed with
    max-shift stabilization.
    """
    if len(particles) == 0:
        raise ValueError("particles must be non-empty")
    model = model or GeologyModel()
    ctx = ObsContext(model, observations)
    lls = np.array([ctx.loglik_geometry(p) for p in particles])
    if weights is None:
        weights = np.full(len(particles), 1.0 / len(particles))
    return float(_log_dot_exp(np.log(weights), lls))


def _log_dot_exp(logw: np.ndarray, ll: np.ndarray) -> float:
    s = logw + ll
    hi = s.max()
    return hi + math.log(np.exp(s - hi).sum())


class EssResult(NamedTuple):
    point: np.ndarray
    loglik: float
    shrinks: int
    angle: float
    bracket: tuple[float, float]


def ess_step(
    current: np.ndarray,
    prior_mean: np.ndarray,
    prior_chol: np.ndarray,
    loglik_fn: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    cur_loglik: float | None = None,
) -> EssResult:
    """One exact elliptical-slice-sampling transition (Gaussian prior).

    Draws an auxiliary prior deviate, thresholds at log u plus the current
    log-likelihood, proposes along the ellipse at a uniform angle, and
    shrinks the angle bracket toward zero until acceptance. Leaves the
    posterior prior(x) * exp(loglik_fn(x)) invariant.
    """
    current = np.asarray(current, dtype=float)
    if cur_loglik is None:
        cur_loglik = loglik_fn(current)
    if not np.isfinite(cur_loglik):
        raise ValueError(f"log-likelihood at the current point is not finite: {cur_loglik}")
    prior_chol = np.asarray(prior_chol, dtype=float)
    z = rng.standard_normal(current.shape[0])
    nu = prior_chol * z if prior_chol.ndim == 1 else prior_chol @ z
    threshold = cur_loglik + math.log(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = angle - 2.0 * math.pi, angle
    centered = current - prior_mean
    shrinks = 0
    while True:
        proposal = centered * math.cos(angle) + nu * math.sin(angle) + prior_mean
        ll = loglik_fn(proposal)
        if ll > threshold:
            return EssResult(proposal, ll, shrinks, angle, (lo, hi))
        if shrinks >= MAX_ESS_SHRINKS:
            raise RuntimeError(
                f"elliptical slice sampling failed to accept after {shrinks} shrinks"
            )
        if angle < 0:
            lo = angle
        else:
            hi = angle
        angle = rng.uniform(lo, hi)
        shrinks += 1


@dataclass(frozen=True)
class Belief:
    """Immutable belief state; updates return new values.

    ``weights`` and ``marginal_loglik`` have one entry per hypothesis plus a
    trailing null entry. ``loglik_trace`` holds one such row per completed
    observation step (cumulative marginal log-likelihoods).
    """

    model: GeologyModel
    hypotheses: tuple[HypothesisSpec, ...]
    weights: np.ndarray
    particles: tuple[tuple[GeometryParams, ...], ...]
    particle_weights: tuple[np.ndarray, ...]
    observations: tuple[DrillObservation, ...]
    marginal_loglik: np.ndarray
    loglik_trace: tuple[np.ndarray, ...]
    null_model: falsify.NullModel | None = None
    null_prior: float = 0.0

    @property
    def n_hypotheses(self) -> int:
        return len(self.hypotheses)

    @property
    def hypothesis_weights(self) -> np.ndarray:
        return self.weights

    def drilled_cells(self) -> set[tuple[int, int]]:
        return {o.location for o in self.observations}


def init_belief(
    hypotheses: Sequence[HypothesisSpec],
    n_particles: int = DEFAULT_N_PARTICLES,
    rng: np.random.Generator | None = None,
    model: GeologyModel | None = None,
    null_model: falsify.NullModel | None = None,
    null_prior: float = 0.0,
) -> Belief:
    """Prior belief: hypothesis priors, i.i.d. prior particles, no holes."""
    if len(hypotheses) == 0:
        raise ValueError("hypothesis list must be non-empty")
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if null_prior > 0 and null_model is None:
        raise ValueError("null_prior > 0 requires a null_model")
    rng = rng or np.random.default_rng()
    model = model or GeologyModel()
    priors = np.array([h.prior_prob for h in hypotheses] + [null_prior], dtype=float)
    total = priors.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"hypothesis priors (incl. null) sum to {total}, expected 1")
    particles = tuple(
        tuple(geology.sample_geometry(h, rng) for _ in range(n_particles))
        for h in hypotheses
    )
    pw = tuple(np.full(n_particles, 1.0 / n_particles) for _ in hypotheses)
    return Belief(
        model=model,
        hypotheses=tuple(hypotheses),
        weights=priors,
        particles=particles,
        particle_weights=pw,
        observations=(),
        marginal_loglik=np.zeros(len(hypotheses) + 1),
        loglik_trace=(),
        null_model=null_model,
        null_prior=null_prior,
    )


def _rejuvenate(
    refreshed: list[tuple[GeometryParams, float]],
    rngs: list[np.random.Generator],
    h: HypothesisSpec,
    ctx: "ObsContext",
    prior_mean: np.ndarray,
    prior_std: np.ndarray,
    diversify_sweeps: int = 3,
) -> tuple[GeometryParams, ...]:
    """Replace particles that elliptical slice sampling left inconsistent
    with the observations by perturbed copies of consistent ones.

    A particle stuck with a membership mismatch is not a posterior sample
    and would pollute predictive and evidence queries; when at least one
    consistent particle exists, stuck ones restart from a consistent state
    and take a few extra transitions for diversity. With no consistent
    particle (the hypothesis cannot explain the holes) the ensemble is
    returned unchanged.
    """
    consistent = [i for i, (_, ll) in enumerate(refreshed) if ll > MISMATCH_SENTINEL / 2]
    if not consistent or len(consistent) == len(refreshed):
        return tuple(g for g, _ in refreshed)

    def fn(x):
        return ctx.loglik_vector(h.n_grabens, h.n_geochem, x)

    out = []
    for i, (geom, ll) in enumerate(refreshed):
        if ll > MISMATCH_SENTINEL / 2:
            out.append(geom)
            continue
        rng = rngs[i]
        donor = refreshed[consistent[int(rng.integers(len(consistent)))]][0]
        x = np.asarray(donor.vector)
        cur = fn(x)
        for _ in range(diversify_sweeps):
            res = ess_step(x, prior_mean, prior_std, fn, rng, cur_loglik=cur)
            x, cur = res.point, res.loglik
        out.append(GeometryParams.from_vector(h.n_grabens, h.n_geochem, x))
    return tuple(out)


def _normalized_weights(log_priors: np.ndarray, marginal: np.ndarray) -> np.ndarray:
    logw = log_priors + marginal
    finite = np.isfinite(logw)
    if not finite.any():
        raise RuntimeError("all hypothesis weights vanished")
    hi = logw[finite].max()
    w = np.where(finite, np.exp(np.clip(logw - hi, -700, 0)), 0.0)
    return w / w.sum()


def update_belief(
    b: Belief,
    o: DrillObservation,
    ess_sweeps: int = DEFAULT_ESS_SWEEPS,
    rng: np.random.Generator | None = None,
    evidence_sweeps: int = DEFAULT_EVIDENCE_SWEEPS,
) -> Belief:
    """Absorb one drill observation and return the updated belief.

    Advances each hypothesis's marginal log-likelihood by the particle-
    averaged conditional likelihood of the new hole given the earlier ones.
    To cut Monte Carlo noise on that increment, each particle contributes
    ``evidence_sweeps`` additional stationary samples of the pre-update
    posterior (ESS transitions that target the previous observation set)
    before the main refresh. Hypothesis weights are then recomputed (null
    handled by its i.i.d. mixture likelihood) and every particle is
    refreshed with ``ess_sweeps`` elliptical-slice transitions targeting the
    posterior over geometry given all observations.
    """
    if o.location in b.drilled_cells():
        raise DuplicateLocationError(f"cell {o.location} was already drilled")
    rng = rng or np.random.default_rng()
    obs_all = b.observations + (o,)
    ctx_prev = ObsContext(b.model, b.observations)
    ctx_new = ObsContext(b.model, obs_all)

    marginal = b.marginal_loglik.copy()
    new_particles: list[tuple[GeometryParams, ...]] = []
    hyp_rngs = rng.spawn(len(b.hypotheses))
    for i, h in enumerate(b.hypotheses):
        geoms = b.particles[i]
        logw = np.log(b.particle_weights[i]) - math.log(1 + evidence_sweeps)
        prior_mean, prior_std = geology.geometry_prior(h)

        def fn_prev(x):
            return ctx_prev.loglik_vector(h.n_grabens, h.n_geochem, x)

        def fn_new(x):
            return ctx_new.loglik_vector(h.n_grabens, h.n_geochem, x)

        def diff_full(x):
            return ctx_new.loglik_vector(
                h.n_grabens, h.n_geochem, x, full=True
            ) - ctx_prev.loglik_vector(h.n_grabens, h.n_geochem, x, full=True)

        # evidence: average the new hole's conditional likelihood over
        # samples of the previous posterior; samples still inconsistent with
        # the previous holes are not posterior samples and are excluded
        sample_logw: list[float] = []
        diffs: list[float] = []
        n_samples = 0
        refreshed = []
        rejuvenate_rngs = []
        for p, (p_rng, geom) in enumerate(zip(hyp_rngs[i].spawn(len(geoms)), geoms)):
            x = np.asarray(geom.vector)
            cur_prev = fn_prev(x)
            n_samples += 1
            if cur_prev > MISMATCH_SENTINEL / 2:
                diffs.append(diff_full(x))
                sample_logw.append(logw[p])
            for _ in range(evidence_sweeps):
                res = ess_step(x, prior_mean, prior_std, fn_prev, p_rng, cur_loglik=cur_prev)
                x, cur_prev = res.point, res.loglik
                n_samples += 1
                if cur_prev > MISMATCH_SENTINEL / 2:
                    diffs.append(diff_full(x))
                    sample_logw.append(logw[p])
            cur_new = fn_new(x)
            for _ in range(ess_sweeps):
                res = ess_step(x, prior_mean, prior_std, fn_new, p_rng, cur_loglik=cur_new)
                x, cur_new = res.point, res.loglik
            refreshed.append((GeometryParams.from_vector(h.n_grabens, h.n_geochem, x), cur_new))
            rejuvenate_rngs.append(p_rng)
        if diffs:
            logw_arr = np.asarray(sample_logw)
            increment = _log_dot_exp(logw_arr - _log_dot_exp(logw_arr, np.zeros(len(diffs))),
                                     np.asarray(diffs))
        else:
            increment = -np.inf
        # finite-ensemble smoothing: when no sample matches the new hole's
        # memberships the raw average collapses toward the sentinel; floor
        # the membership fraction at a Jeffreys-style 0.5/(M+1) so that
        # falsification accumulates over holes rather than firing on one
        # zero-match fluke
        floor = (
            ctx_new.gaussian_loglik(ctx_new.grab_obs, ctx_new.chem_obs)
            - ctx_prev.gaussian_loglik(ctx_prev.grab_obs, ctx_prev.chem_obs)
            + math.log(0.5 / (n_samples + 1))
        )
        marginal[i] += max(increment, floor)
        new_particles.append(
            _rejuvenate(refreshed, rejuvenate_rngs, h, ctx_new, prior_mean, prior_std)
        )

    if b.null_model is not None:
        marginal[-1] = falsify.null_loglik(b.null_model, obs_all)
    priors = np.array([h.prior_prob for h in b.hypotheses] + [b.null_prior])
    with np.errstate(divide="ignore"):
        weights = _normalized_weights(np.log(priors), marginal)
    n_particles = len(b.particles[0])
    return replace(
        b,
        weights=weights,
        particles=tuple(new_particles),
        particle_weights=tuple(np.full(n_particles, 1.0 / n_particles) for _ in b.hypotheses),
        observations=obs_all,
        marginal_loglik=marginal,
        loglik_trace=b.loglik_trace + (marginal.copy(),),
    )


class PredictiveMoments(NamedTuple):
    th_mean: float
    th_var: float
    g_mean: float
    g_var: float


def _mixture_total(weights: list[float], means: list[float], variances: list[float]):
    w = np.asarray(weights)
    m = np.asarray(means)
    v = np.asarray(variances)
    w = w / w.sum()
    mean = float(w @ m)
    var = float(w @ (v + m * m) - mean * mean)
    return mean, max(var, 0.0)


def _component_weights(b: Belief) -> list[tuple[float, int, int]]:
    """(weight, hypothesis index, particle index) triples; -1 marks the null."""
    out = []
    for i in range(b.n_hypotheses):
        wh = float(b.weights[i])
        if wh == 0.0:
            continue
        for p, wp in enumerate(b.particle_weights[i]):
            out.append((wh * float(wp), i, p))
    if b.weights[-1] > 0:
        out.append((float(b.weights[-1]), -1, -1))
    return out


def posterior_predictive(b: Belief, cell: tuple[int, int]) -> PredictiveMoments:
    """Law-of-total-moments field predictive at one cell, mixing over
    hypotheses and particles of the kriging predictive."""
    model = b.model
    ctx = ObsContext(model, b.observations)
    query = np.array([[float(cell[0]), float(cell[1])]])
    ws, th_m, th_v, g_m, g_v = [], [], [], [], []
    for w, i, p in _component_weights(b):
        if i < 0:
            tm, tv = falsify.mixture_moments(b.null_model.thickness_mixture)
            gm, gv = falsify.mixture_moments(b.null_model.grade_mixture)
        else:
            geom = b.particles[i][p]
            grab_q, chem_q = geology.masks_at_points(geom, query, model.grid_shape)
            tm, tv = _region_predict(
                model, ctx, geom, query, grab_q[0], field="thickness"
            )
            gm, gv = _region_predict(model, ctx, geom, query, chem_q[0], field="grade")
        ws.append(w)
        th_m.append(tm)
        th_v.append(tv)
        g_m.append(gm)
        g_v.append(gv)
    tmean, tvar = _mixture_total(ws, th_m, th_v)
    gmean, gvar = _mixture_total(ws, g_m, g_v)
    return PredictiveMoments(tmean, tvar, gmean, gvar)


def _region_predict(model, ctx, geom, query, member_flag, field):
    """Kriging predictive of one field at one query cell, using only the
    observations that share the query's domain membership under geom."""
    if field == "thickness":
        values, means = ctx.th, model.thickness_means
        memb = geology.masks_at_points(geom, ctx.locs, model.grid_shape)[0] if len(ctx) else None
    else:
        values, means = ctx.g, model.grade_means
        memb = geology.masks_at_points(geom, ctx.locs, model.grid_shape)[1] if len(ctx) else None
    mean = means[1] if member_flag else means[0]
    if len(ctx) == 0:
        return mean, model.kernel.marginal_std**2
    idx = np.flatnonzero(memb == member_flag)
    obs = gp.GpObservationSet(ctx.locs[idx], values[idx], model.noise_std)
    mu, var = gp.krige_predict(obs, query, mean, model.kernel)
    return float(mu[0]), float(var[0])


def conditional_fields(
    model: GeologyModel,
    geom: GeometryParams,
    ctx: ObsContext,
    rng: np.random.Generator,
    n: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """n conditional (thickness, grade) field draws for a fixed geometry.

    Returns (thickness (n,H,W), grade (n,H,W), graben_mask, geochem_mask).
    Each field's in/out populations are conditioned independently on the
    same-membership observations, then composed by the rasterized mask.
    """
    shape = model.grid_shape
    grab_mask = geology.rasterize_graben(geom, shape)
    chem_mask = geology.rasterize_geochem(geom, shape)
    if len(ctx):
        grab_at, chem_at = geology.masks_at_points(geom, ctx.locs, shape)
    else:
        grab_at = chem_at = np.zeros(0, dtype=bool)

    def field_draws(values, membership_at_obs, means, mask):
        parts = []
        for flag, mean in ((False, means[0]), (True, means[1])):
            idx = np.flatnonzero(membership_at_obs == flag)
            obs = gp.GpObservationSet(
                ctx.locs[idx] if len(ctx) else np.empty((0, 2)),
                values[idx] if len(ctx) else np.empty(0),
                model.noise_std,
            )
            parts.append(
                gp.conditional_grid_draws(obs, np.full(shape, mean), model.kernel, rng, n)
            )
        return np.where(mask[None, :, :], parts[1], parts[0])

    thickness = field_draws(ctx.th, grab_at, model.thickness_means, grab_mask)
    grade = field_draws(ctx.g, chem_at, model.grade_means, chem_mask)
    return thickness, grade, grab_mask, chem_mask


def sample_posterior_models(
    b: Belief, n: int, rng: np.random.Generator
) -> list[geology.GeoModel]:
    """n conditional world draws: hypothesis -> particle -> fields given holes."""
    comps = _component_weights(b)
    w = np.array([c[0] for c in comps])
    picks = rng.choice(len(comps), size=n, p=w / w.sum())
    counts: dict[int, int] = {}
    for k in picks:
        counts[int(k)] = counts.get(int(k), 0) + 1
    ctx = ObsContext(b.model, b.observations)
    out: list[geology.GeoModel] = []
    for k in sorted(counts):
        cnt = counts[k]
        _, i, p = comps[k]
        if i < 0:
            out.extend(_null_draws(b, cnt, rng))
            continue
        geom = b.particles[i][p]
        th, g, grab, chem = conditional_fields(b.model, geom, ctx, rng, cnt)
        for j in range(cnt):
            out.append(
                geology.GeoModel(
                    thickness=th[j],
                    grade=g[j],
                    graben_mask=grab,
                    geochem_mask=chem,
                    hypothesis_id=b.hypotheses[i].id,
                )
            )
    return out


def _null_draws(b: Belief, n: int, rng: np.random.Generator) -> list[geology.GeoModel]:
    shape = b.model.grid_shape
    out = []
    for _ in range(n):
        th = _mixture_field(b.null_model.thickness_mixture, shape, rng)
        g = _mixture_field(b.null_model.grade_mixture, shape, rng)
        zeros = np.zeros(shape, dtype=bool)
        out.append(geology.GeoModel(th, g, zeros, zeros, hypothesis_id=0))
    return out


def _mixture_field(mix, shape, rng):
    w = np.array([c[0] for c in mix])
    means = np.array([c[1] for c in mix])
    stds = np.array([c[2] for c in mix])
    comp = rng.choice(len(mix), size=shape, p=w / w.sum())
    return rng.normal(means[comp], stds[comp])


def expected_profit(
    b: Belief,
    e: geology.EconParams,
    n_mc: int = 64,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Monte Carlo mean and std of deposit value under the belief.

    Campaign drill costs are excluded (n_holes = 0): this estimates the value
    of the deposit itself.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = rng or np.random.default_rng()
    models = sample_posterior_models(b, n_mc, rng)
    profits = np.array([geology.profit(m, e, 0) for m in models])
    return float(profits.mean()), float(profits.std())


def predictive_grids(b: Belief, particle_stride: int = 1) -> dict[str, np.ndarray]:
    """Full-grid predictive mean/std for both fields (mixture moments).

    ``particle_stride`` subsamples particles deterministically to bound cost
    for interactive use; 1 uses every particle.
    """
    model = b.model
    shape = model.grid_shape
    query = gp.grid_locations(shape)
    ctx = ObsContext(model, b.observations)
    comps = [
        (w, i, p)
        for (w, i, p) in _component_weights(b)
        if i < 0 or p % particle_stride == 0
    ]
    ws = np.array([c[0] for c in comps])
    ws = ws / ws.sum()
    th_m = np.zeros((len(comps), query.shape[0]))
    th_v = np.zeros_like(th_m)
    g_m = np.zeros_like(th_m)
    g_v = np.zeros_like(th_m)
    for row, (_, i, p) in enumerate(comps):
        if i < 0:
            tm, tv = falsify.mixture_moments(b.null_model.thickness_mixture)
            gm, gv = falsify.mixture_moments(b.null_model.grade_mixture)
            th_m[row], th_v[row], g_m[row], g_v[row] = tm, tv, gm, gv
            continue
        geom = b.particles[i][p]
        th_m[row], th_v[row] = _field_grid_predict(
            model, ctx, geom, query, field="thickness"
        )
        g_m[row], g_v[row] = _field_grid_predict(model, ctx, geom, query, field="grade")
    mean_th = ws @ th_m
    var_th = ws @ (th_v + th_m**2) - mean_th**2
    mean_g = ws @ g_m
    var_g = ws @ (g_v + g_m**2) - mean_g**2
    return {
        "th_mean": mean_th.reshape(shape),
        "th_std": np.sqrt(np.clip(var_th, 0, None)).reshape(shape),
        "g_mean": mean_g.reshape(shape),
        "g_std": np.sqrt(np.clip(var_g, 0, None)).reshape(shape),
    }


def _field_grid_predict(model, ctx, geom, query, field):
    shape = model.grid_shape
    if field == "thickness":
        values, means = ctx.th, model.thickness_means
        mask = geology.rasterize_graben(geom, shape).ravel()
        memb_at = geology.masks_at_points(geom, ctx.locs, shape)[0] if len(ctx) else None
    else:
        values, means = ctx.g, model.grade_means
        mask = geology.rasterize_geochem(geom, shape).ravel()
        memb_at = geology.masks_at_points(geom, ctx.locs, shape)[1] if len(ctx) else None
    mu = np.where(mask, means[1], means[0]).astype(float)
    var = np.full(query.shape[0], model.kernel.marginal_std**2)
    if len(ctx) == 0:
        return mu, var
    for flag, mean in ((False, means[0]), (True, means[1])):
        idx = np.flatnonzero(memb_at == flag)
        cells = np.flatnonzero(mask == flag)
        if cells.size == 0:
            continue
        obs = gp.GpObservationSet(ctx.locs[idx], values[idx], model.noise_std)
        m_q, v_q = gp.krige_predict(obs, query[cells], mean, model.kernel)
        mu[cells] = m_q
        var[cells] = v_q
    return mu, var
