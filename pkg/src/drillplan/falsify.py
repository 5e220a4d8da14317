"""Maximum-entropy null model and the falsification monitor.

The null model treats per-cell thickness and grade as i.i.d. draws from
Gaussian mixtures fitted to prior geology samples, with no spatial
correlation and fair-coin domain memberships. A structural hypothesis is
falsified when its marginal data log-likelihood falls below the null's by
more than a configurable margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geology

LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class NullModel:
    """Two Gaussian mixtures over observed values: (weight, mean, std) triples."""

    thickness_mixture: tuple[tuple[float, float, float], ...]
    grade_mixture: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        for name in ("thickness_mixture", "grade_mixture"):
            mix = getattr(self, name)
            if not mix:
                raise ValueError(f"{name} must have at least one component")
            w = np.array([c[0] for c in mix])
            s = np.array([c[2] for c in mix])
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} weights must be positive and sum to 1")
            if np.any(s <= 0):
                raise ValueError(f"{name} stds must be > 0")


def _mixture_logpdf(mix: Sequence[tuple[float, float, float]], x: float) -> float:
    terms = [
        math.log(w) - 0.5 * math.log(2.0 * math.pi * s * s) - 0.5 * ((x - m) / s) ** 2
        for w, m, s in mix
    ]
    hi = max(terms)
    return hi + math.log(sum(math.exp(t - hi) for t in terms))


def mixture_moments(mix: Sequence[tuple[float, float, float]]) -> tuple[float, float]:
    """Mean and variance of a Gaussian mixture."""
    mean = sum(w * m for w, m, _ in mix)
    var = sum(w * (s * s + m * m) for w, m, s in mix) - mean * mean
    return mean, var


def _fit_two_population_mixture(values: np.ndarray, membership: np.ndarray):
    """Moment-match one component per in/out-of-domain population."""
    comps = []
    for flag in (False, True):
        sel = values[membership == flag]
        if sel.size == 0:
            continue
        comps.append(
            (sel.size / values.size, float(sel.mean()), max(float(sel.std()), 1e-6))
        )
    return tuple(comps)


def build_null(
    hypotheses: Sequence[geology.HypothesisSpec],
    n_calibration: int,
    rng: np.random.Generator,
    model: geology.GeologyModel | None = None,
) -> NullModel:
    """Fit the null mixtures to pooled per-cell values of prior truths.

    Hypotheses are sampled according to their prior probabilities; the
    mixtures are moment-matched per in/out-of-domain population, discarding
    all spatial correlation.
    """
    if n_calibration < 100:
        raise ValueError(f"n_calibration must be >= 100, got {n_calibration}")
    model = model or geology.GeologyModel()
    priors = np.array([h.prior_prob for h in hypotheses], dtype=float)
    priors = priors / priors.sum()
    th_vals, th_memb, g_vals, g_memb = [], [], [], []
    for _ in range(n_calibration):
        h = hypotheses[rng.choice(len(hypotheses), p=priors)]
        m = geology.sample_truth(h, rng, model)
        th_vals.append(m.thickness.ravel())
        th_memb.append(m.graben_mask.ravel())
        g_vals.append(m.grade.ravel())
        g_memb.append(m.geochem_mask.ravel())
    return NullModel(
        thickness_mixture=_fit_two_population_mixture(
            np.concatenate(th_vals), np.concatenate(th_memb)
        ),
        grade_mixture=_fit_two_population_mixture(
            np.concatenate(g_vals), np.concatenate(g_memb)
        ),
    )


def null_loglik(n: NullModel, observations: Sequence) -> float:
    """Log-likelihood of the drill observations under the null model.

    Values are i.i.d. mixture draws across holes; each of the two domain
    booleans contributes log(1/2) (uninformative null over memberships).
    """
    total = 0.0
    for o in observations:
        total += _mixture_logpdf(n.thickness_mixture, o.thickness_obs)
        total += _mixture_logpdf(n.grade_mixture, o.grade_obs)
        total += 2.0 * LOG_HALF
    return total


@dataclass(frozen=True)
class FalsificationStatus:
    hypothesis_ids: tuple[int, ...]
    falsified: tuple[bool, ...]
    hypothesis_logliks: tuple[float, ...]
    null_loglik: float
    all_falsified: bool


def falsification_status(belief, n: NullModel, margin: float = 0.0) -> FalsificationStatus:
    """Compare each structural hypothesis's marginal log-likelihood to the null.

    Hypothesis h is falsified iff loglik(h) < loglik(null) - margin. The
    belief's tracked cumulative marginal log-likelihoods are used for the
    hypotheses; the null term is recomputed exactly from the observations.
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    ll_null = null_loglik(n, belief.observations)
    ids = tuple(h.id for h in belief.hypotheses)
    lls = tuple(float(v) for v in belief.marginal_loglik[: len(ids)])
    flags = tuple(ll < ll_null - margin for ll in lls)
    return FalsificationStatus(
        hypothesis_ids=ids,
        falsified=flags,
        hypothesis_logliks=lls,
        null_loglik=ll_null,
        all_falsified=all(flags),
    )
