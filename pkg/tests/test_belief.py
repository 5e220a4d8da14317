import math

import numpy as np
import pytest
from scipy import stats

from drillplan import belief as bel
from drillplan import falsify, geology, gp
from drillplan.belief import (
    Belief,
    DrillObservation,
    DuplicateLocationError,
    ObsContext,
    ess_step,
    expected_profit,
    hypothesis_loglik,
    init_belief,
    loglik_given_geometry,
    posterior_predictive,
    update_belief,
)
from drillplan.geology import GeologyModel, GeometryParams, HypothesisSpec, default_hypotheses


def vertical_band_geom(start, width, n_geochem=0, chem_center=(100.0, 100.0)):
    """One graben as an exact vertical band; optional far-away chem domain."""
    vec = [start, width, start, width]
    for _ in range(n_geochem):
        vec += [chem_center[0], chem_center[1]] + [2.0] * 10
    return GeometryParams(n_grabens=1, n_geochem=n_geochem, vector=tuple(vec))


def obs(loc, th, g, grab, chem, step=0):
    return DrillObservation(
        location=loc, thickness_obs=th, grade_obs=g, graben_obs=grab, geochem_obs=chem,
        step_index=step,
    )


class TestLoglikGivenGeometry:
    def test_empty_observations(self):
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6, n_geochem=1)
        assert loglik_given_geometry([], h, geom) == 0.0

    def test_mask_contradiction_hits_sentinel(self):
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6, n_geochem=1)
        # cell (5, 12) is inside the band but reported as out-of-graben
        o = obs((5, 12), 1.0, 0.0, False, False)
        assert loglik_given_geometry([o], h, geom) <= -1e9

    def test_matching_masks_equal_normal_density_oracle(self):
        model = GeologyModel()
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6, n_geochem=1)
        o = obs((5, 12), 7.5, 0.013, True, False)
        got = loglik_given_geometry([o], h, geom, model)
        sd = math.sqrt(0.01 + model.noise_std**2 + gp.JITTER)
        expected = stats.norm(7.5, sd).logpdf(7.5) + stats.norm(0.0, sd).logpdf(0.013)
        assert got == pytest.approx(expected, abs=1e-6)

    def test_region_blocks_are_independent(self):
        # one in-graben and one out-of-graben hole: the thickness term is the
        # sum of two independent univariate densities, not a joint kriging fit
        model = GeologyModel()
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6)
        o1 = obs((5, 12), 7.4, 0.01, True, False)
        o2 = obs((5, 13), 7.6, -0.02, True, False)
        o_out = obs((5, 25), 1.1, 0.005, False, False)
        joint = loglik_given_geometry([o1, o2, o_out], h, geom, model)
        ctx_in = ObsContext(model, [o1, o2])
        in_block = gp.gp_log_marginal(
            gp.GpObservationSet(ctx_in.locs, ctx_in.th, model.noise_std), 7.5, model.kernel
        )
        sd = math.sqrt(0.01 + model.noise_std**2 + gp.JITTER)
        out_block = stats.norm(1.0, sd).logpdf(1.1)
        grade_all = ObsContext(model, [o1, o2, o_out])
        g_block = gp.gp_log_marginal(
            gp.GpObservationSet(grade_all.locs, grade_all.g, model.noise_std), 0.0, model.kernel
        )
        assert joint == pytest.approx(in_block + out_block + g_block, abs=1e-8)


class TestHypothesisLoglik:
    def test_single_particle_equals_geometry_loglik(self):
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6, n_geochem=1)
        o = obs((5, 12), 7.5, 0.0, True, False)
        a = hypothesis_loglik([o], h, [geom])
        b = loglik_given_geometry([o], h, geom)
        assert a == pytest.approx(b, abs=1e-12)

    def test_identical_particles_collapse(self):
        h = default_hypotheses()[0]
        geom = vertical_band_geom(10, 6, n_geochem=1)
        o = obs((5, 12), 7.5, 0.0, True, False)
        a = hypothesis_loglik([o], h, [geom] * 5)
        assert a == pytest.approx(loglik_given_geometry([o], h, geom), abs=1e-12)

    def test_log_sum_exp_arithmetic(self):
        # frozen from log((exp(-1) + exp(-3)) / 2)
        got = bel._log_dot_exp(np.log([0.5, 0.5]), np.array([-1.0, -3.0]))
        assert got == pytest.approx(math.log((math.exp(-1) + math.exp(-3)) / 2), abs=1e-12)
        assert got == pytest.approx(-1.5662, abs=1e-4)


class TestEssStep:
    def test_flat_likelihood_samples_prior(self):
        rng = np.random.default_rng(0)
        mean = np.array([1.0, -2.0])
        std = np.array([2.0, 0.5])
        x = mean.copy()
        samples = np.empty((10000, 2))
        for i in range(10000):
            res = ess_step(x, mean, std, lambda _: 0.0, rng, cur_loglik=0.0)
            x = res.point
            samples[i] = x
        se = std / math.sqrt(10000)
        np.testing.assert_allclose(samples.mean(axis=0), mean, atol=3.5 * se.max())
        np.testing.assert_allclose(samples.std(axis=0), std, rtol=0.05)

    def test_conjugate_posterior_moments(self):
        rng = np.random.default_rng(1)
        prior_mean = np.array([0.0, 0.0])
        prior_std = np.array([1.0, 2.0])
        y = np.array([1.0, -1.0])
        lik_std = 0.5
        post_var = 1.0 / (1.0 / prior_std**2 + 1.0 / lik_std**2)
        post_mean = post_var * (prior_mean / prior_std**2 + y / lik_std**2)

        def loglik(x):
            return float(-0.5 * np.sum((x - y) ** 2) / lik_std**2)

        x = prior_mean.copy()
        cur = loglik(x)
        n, burn = 5000, 500
        samples = np.empty((n, 2))
        for i in range(n + burn):
            res = ess_step(x, prior_mean, prior_std, loglik, rng, cur_loglik=cur)
            x, cur = res.point, res.loglik
            if i >= burn:
                samples[i - burn] = x
        # allow a conservative autocorrelation factor of 5 in the SE
        se = np.sqrt(post_var) * math.sqrt(5.0 / n)
        np.testing.assert_allclose(samples.mean(axis=0), post_mean, atol=3 * se.max())
        np.testing.assert_allclose(samples.var(axis=0), post_var, rtol=0.15)

    def test_bracket_and_termination(self):
        rng = np.random.default_rng(2)
        mean = np.zeros(3)
        std = np.ones(3)
        x = np.zeros(3)

        def loglik(v):
            return float(-0.5 * np.sum((v - 1.5) ** 2) / 0.01)

        for _ in range(50):
            res = ess_step(x, mean, std, loglik, rng)
            assert res.shrinks < 1000
            assert res.bracket[0] <= res.angle <= res.bracket[1]
            x = res.point

    def test_nonfinite_current_loglik_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            ess_step(np.zeros(2), np.zeros(2), np.ones(2), lambda _: 0.0, rng,
                     cur_loglik=float("nan"))


def make_null(rng=None):
    return falsify.build_null(default_hypotheses(), 100, rng or np.random.default_rng(17))


class TestInitBelief:
    def test_uniform_priors_and_particles(self):
        b = init_belief(default_hypotheses(), n_particles=100, rng=np.random.default_rng(0))
        np.testing.assert_allclose(b.weights[:4], 0.25)
        assert b.weights[-1] == 0.0
        for pw in b.particle_weights:
            np.testing.assert_allclose(pw, 0.01)
        assert len(b.particles[0]) == 100

    def test_determinism(self):
        a = init_belief(default_hypotheses(), 10, np.random.default_rng(4))
        b = init_belief(default_hypotheses(), 10, np.random.default_rng(4))
        assert a.particles == b.particles

    def test_empty_hypotheses_rejected(self):
        with pytest.raises(ValueError):
            init_belief([], 10, np.random.default_rng(0))


class TestUpdateBelief:
    def _observe_truth(self, truth, cell, model, rng, step):
        r, c = cell
        return DrillObservation(
            location=cell,
            thickness_obs=float(truth.thickness[r, c] + rng.normal(0, model.noise_std)),
            grade_obs=float(truth.grade[r, c] + rng.normal(0, model.noise_std)),
            graben_obs=bool(truth.graben_mask[r, c]),
            geochem_obs=bool(truth.geochem_mask[r, c]),
            step_index=step,
        )

    def test_weights_remain_simplex(self):
        model = GeologyModel()
        rng = np.random.default_rng(5)
        b = init_belief(default_hypotheses(), 30, rng, model, null_model=make_null())
        truth = geology.sample_truth(default_hypotheses()[0], np.random.default_rng(9), model)
        for step, cell in enumerate([(4, 4), (20, 20), (10, 28)]):
            o = self._observe_truth(truth, cell, model, rng, step)
            b = update_belief(b, o, ess_sweeps=5, rng=rng)
            assert np.all(b.weights >= 0)
            assert b.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert len(b.loglik_trace) == 3
        assert len(b.observations) == 3

    def test_duplicate_location_rejected(self):
        model = GeologyModel()
        rng = np.random.default_rng(6)
        b = init_belief(default_hypotheses(), 10, rng, model, null_model=make_null())
        o = obs((4, 4), 1.0, 0.0, False, False)
        b = update_belief(b, o, ess_sweeps=2, rng=rng)
        with pytest.raises(DuplicateLocationError):
            update_belief(b, obs((4, 4), 1.1, 0.0, False, False, step=1), 2, rng)

    def test_first_update_matches_prior_ensemble_marginal(self):
        # after one hole the tracked marginal equals the particle average of
        # the joint likelihood over the prior ensemble
        model = GeologyModel()
        rng = np.random.default_rng(7)
        b = init_belief(default_hypotheses(), 40, rng, model, null_model=make_null())
        o = obs((8, 14), 7.4, 0.02, True, False)
        expected = [
            hypothesis_loglik([o], h, b.particles[i], model=model)
            for i, h in enumerate(b.hypotheses)
        ]
        b2 = update_belief(b, o, ess_sweeps=2, rng=rng, evidence_sweeps=0)
        np.testing.assert_allclose(b2.marginal_loglik[:4], expected, atol=1e-9)

    def test_null_weight_stays_zero_by_default(self):
        model = GeologyModel()
        rng = np.random.default_rng(8)
        b = init_belief(default_hypotheses(), 10, rng, model, null_model=make_null())
        b = update_belief(b, obs((3, 3), 1.0, 0.01, False, False), 2, rng)
        assert b.weights[-1] == 0.0

    def test_refreshed_particles_consistent_with_observations(self):
        model = GeologyModel()
        rng = np.random.default_rng(10)
        truth = geology.sample_truth(default_hypotheses()[0], np.random.default_rng(2), model)
        b = init_belief(default_hypotheses(), 25, rng, model, null_model=make_null())
        for step, cell in enumerate([(6, 6), (16, 16), (26, 10)]):
            o = self._observe_truth(truth, cell, model, rng, step)
            b = update_belief(b, o, ess_sweeps=20, rng=rng)
        ctx = ObsContext(model, b.observations)
        consistent = 0
        total = 0
        for i in range(4):
            for geom in b.particles[i]:
                total += 1
                if ctx.loglik_geometry(geom) > -1e8:
                    consistent += 1
        assert consistent / total > 0.9

    def test_prior_scaling_invariance(self):
        marg = np.array([-3.0, -1.0, -2.0, 0.0])
        base = bel._normalized_weights(np.log([0.25, 0.25, 0.25, 0.25]), marg)
        scaled = bel._normalized_weights(np.log([0.5, 0.5, 0.5, 0.5]), marg)
        np.testing.assert_allclose(base, scaled, atol=1e-12)
        assert base.argmax() == scaled.argmax()

    def test_true_hypothesis_identified_from_its_own_data(self):
        # truth drawn from the 1-graben/1-domain class; with holes spread over
        # the structure-bearing region its weight becomes strictly maximal at
        # some point of the campaign in most trials
        model = GeologyModel()
        wins = 0
        n_trials = 6
        cells = [(r, c) for r in (6, 12, 18, 24) for c in (6, 11, 16, 21)][:12]
        for trial in range(n_trials):
            rng = np.random.default_rng(100 + trial)
            truth = geology.sample_truth(default_hypotheses()[0], rng, model)
            b = init_belief(default_hypotheses(), 60, rng, model,
                            null_model=make_null(np.random.default_rng(50 + trial)))
            attained = False
            for step, cell in enumerate(cells):
                o = self._observe_truth(truth, cell, model, rng, step)
                b = update_belief(b, o, ess_sweeps=10, rng=rng, evidence_sweeps=4)
                w = b.weights[:4]
                if w[0] > max(w[1:]):
                    attained = True
            wins += attained
        assert wins >= 5


class TestPosteriorPredictive:
    def _single_particle_belief(self, geoms, weights=None, observations=()):
        model = GeologyModel()
        h = HypothesisSpec(id=1, n_grabens=1, n_geochem=0, prior_prob=1.0)
        n = len(geoms)
        w = np.asarray(weights) if weights is not None else np.full(n, 1.0 / n)
        return Belief(
            model=model,
            hypotheses=(h,),
            weights=np.array([1.0, 0.0]),
            particles=(tuple(geoms),),
            particle_weights=(w,),
            observations=tuple(observations),
            marginal_loglik=np.zeros(2),
            loglik_trace=(),
        )

    def test_prior_in_graben_moments(self):
        geom = vertical_band_geom(10.0, 6.0)
        b = self._single_particle_belief([geom])
        p = posterior_predictive(b, (5, 12))
        assert p.th_mean == pytest.approx(7.5)
        assert p.th_var == pytest.approx(0.01)
        assert p.g_mean == pytest.approx(0.0)

    def test_drilled_cell_reproduced(self):
        geom = vertical_band_geom(10.0, 6.0)
        o = obs((5, 12), 7.432, 0.021, True, False)
        b = self._single_particle_belief([geom], observations=[o])
        p = posterior_predictive(b, (5, 12))
        assert p.th_mean == pytest.approx(7.432, abs=1e-4)
        assert p.th_var <= b.model.noise_std**2 * 2 + 1e-6

    def test_two_particle_mixture_arithmetic(self):
        inside = vertical_band_geom(10.0, 6.0)  # covers column 12
        outside = vertical_band_geom(25.0, 3.0)  # misses column 12
        b = self._single_particle_belief([inside, outside])
        p = posterior_predictive(b, (5, 12))
        assert p.th_mean == pytest.approx((7.5 + 1.0) / 2)
        assert p.th_var == pytest.approx(0.01 + 10.5625, abs=1e-9)


class TestExpectedProfit:
    def test_price_zero_gives_exact_extraction_cost(self):
        b = init_belief(default_hypotheses(), 5, np.random.default_rng(0))
        e = geology.EconParams(price_scale=0.0, extraction_cost=35.0)
        mean, std = expected_profit(b, e, n_mc=16, rng=np.random.default_rng(1))
        assert mean == pytest.approx(-35.0)
        assert std == 0.0

    def test_matches_direct_mc_oracle_without_costs(self):
        # zero costs: expected profit equals expected qualifying mineralization
        model = GeologyModel()
        h = default_hypotheses()[0]
        rng = np.random.default_rng(2)
        b = init_belief([HypothesisSpec(1, 1, 1, 1.0)], 40, rng, model)
        e = geology.EconParams(cutoff_grade=6.0, extraction_cost=0.0, drill_cost=0.0,
                               price_scale=1.0)
        mean, std = expected_profit(b, e, n_mc=300, rng=np.random.default_rng(3))
        oracle_rng = np.random.default_rng(4)
        oracle = np.array([
            geology.profit(geology.sample_truth(h, oracle_rng, model), e, 0)
            for _ in range(300)
        ])
        se = math.hypot(std / math.sqrt(300), oracle.std() / math.sqrt(300))
        assert abs(mean - oracle.mean()) < 3 * se

    def test_determinism(self):
        b = init_belief(default_hypotheses(), 5, np.random.default_rng(0))
        e = geology.EconParams()
        a = expected_profit(b, e, 8, np.random.default_rng(7))
        c = expected_profit(b, e, 8, np.random.default_rng(7))
        assert a == c
