import math

import numpy as np
import pytest

from smoothquad import linalg, models, pricing, rules1d
from smoothquad.errors import OutOfDomain
from smoothquad.sampling import RngSpec


def bs_price(s0, k, sigma):
    d1 = (math.log(s0 / k) + 0.5 * sigma * sigma) / sigma
    d2 = d1 - sigma
    return pricing.norm_cdf(d1) * s0 - pricing.norm_cdf(d2) * k


def smoothing_parts(model, v=None):
    prob = models.effective_bs(model)
    dec = linalg.rank_one_reduce(prob.Sigma, v)
    return prob, dec


class TestNormCdf:
    def test_center_and_symmetry(self):
        assert pricing.norm_cdf(0.0) == 0.5
        for x in (0.3, 1.0, 2.5):
            np.testing.assert_allclose(
                pricing.norm_cdf(x) + pricing.norm_cdf(-x), 1.0, rtol=1e-15
            )

    def test_reference_value(self):
        np.testing.assert_allclose(
            pricing.norm_cdf(1.96), 0.9750021048517795, rtol=1e-14
        )

    def test_scalar_comes_back_as_float(self):
        out = pricing.norm_cdf(0.7)
        assert isinstance(out, float)

    def test_array_input(self):
        x = np.array([-1.0, 0.0, 1.0])
        out = pricing.norm_cdf(x)
        assert out.shape == (3,)
        np.testing.assert_allclose(out[1], 0.5, rtol=1e-15)


class TestBsCall:
    def test_at_the_money_value(self):
        np.testing.assert_allclose(
            pricing.bs_call(1.0, 1.0, 0.2), bs_price(1.0, 1.0, 0.2), rtol=1e-14
        )

    def test_generic_value(self):
        np.testing.assert_allclose(
            pricing.bs_call(100.0, 90.0, 0.25), bs_price(100.0, 90.0, 0.25), rtol=1e-14
        )

    def test_nonpositive_strike_pays_forward_difference(self):
        assert pricing.bs_call(5.0, -2.0, 0.3) == 7.0
        assert pricing.bs_call(5.0, 0.0, 0.3) == 5.0

    def test_zero_volatility_pays_intrinsic(self):
        assert pricing.bs_call(4.0, 3.0, 0.0) == 1.0
        assert pricing.bs_call(3.0, 4.0, 0.0) == 0.0

    def test_bounds(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            s0 = rng.uniform(0.1, 50.0)
            k = rng.uniform(0.1, 50.0)
            sigma = rng.uniform(0.0, 2.0)
            p = pricing.bs_call(s0, k, sigma)
            assert p >= max(s0 - k, 0.0) - 1e-12
            assert p <= s0 + 1e-12

    def test_monotone_in_volatility(self):
        sig = np.linspace(0.05, 1.5, 30)
        prices = pricing.bs_call(10.0, 11.0, sig)
        assert np.all(np.diff(prices) > 0.0)

    def test_extreme_arguments_stay_finite(self):
        p = pricing.bs_call(1e120, 1.0, 0.5)
        assert np.isfinite(p)
        assert pricing.bs_call(1e-10, 1e10, 0.1) == 0.0

    def test_vectorized_broadcast(self):
        s0 = np.array([[1.0], [2.0]])
        k = np.array([0.5, 1.0, -1.0])
        out = pricing.bs_call(s0, k, 0.3)
        assert out.shape == (2, 3)
        assert out[0, 2] == 2.0
        assert out[1, 2] == 3.0

    def test_rejects_bad_spot(self):
        with pytest.raises(OutOfDomain):
            pricing.bs_call(0.0, 1.0, 0.2)
        with pytest.raises(OutOfDomain):
            pricing.bs_call(np.nan, 1.0, 0.2)

    def test_rejects_negative_volatility(self):
        with pytest.raises(ValueError):
            pricing.bs_call(1.0, 1.0, -0.1)


class TestIntegrandConstruction:
    def test_raw_payoff_at_origin(self):
        model = models.random_instance(3, 5)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        assert f.dim == 3
        assert f.label == "raw"
        expected = max(prob.w.sum() - prob.K, 0.0)
        np.testing.assert_allclose(f(np.zeros((1, 3)))[0], expected, rtol=1e-14)

    def test_smoothed_at_origin(self):
        model = models.random_instance(3, 5)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        assert g.dim == 2
        assert g.label == "CS"
        lam1 = math.sqrt(dec.lambda_sq[0])
        expected = pricing.bs_call(
            prob.w.sum() * math.exp(0.5 * lam1 * lam1), prob.K, lam1
        )
        np.testing.assert_allclose(g(np.zeros((1, 2)))[0], expected, rtol=1e-14)

    def test_smoothed_is_positive(self):
        model = models.random_instance(4, 9)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        pts = np.random.default_rng(1).standard_normal((64, 3))
        assert np.all(g(pts) > 0.0)

    def test_all_ones_direction_matches_plain_smoothing(self):
        model = models.random_instance(4, 17)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        g2 = pricing.smoothed_integrand_v(prob, np.ones(4), dec)
        assert g2.label == "CS2"
        pts = np.random.default_rng(2).standard_normal((100, 3))
        np.testing.assert_allclose(g2(pts), g(pts), rtol=1e-12)

    def test_partial_direction_by_hand(self):
        model = models.random_instance(2, 23)
        v = np.array([1.0, 0.0])
        prob, dec = smoothing_parts(model, v)
        g2 = pricing.smoothed_integrand_v(prob, v, dec)
        pts = np.random.default_rng(3).standard_normal((20, 1))
        loadings = dec.V[:, 1:] * np.sqrt(dec.lambda_sq[1:])
        tilt = np.exp(pts @ loadings.T)
        lam1 = math.sqrt(dec.lambda_sq[0])
        expected = pricing.bs_call(
            tilt[:, 0] * prob.w[0] * math.exp(0.5 * lam1 * lam1),
            prob.K - tilt[:, 1] * prob.w[1],
            lam1,
        )
        np.testing.assert_allclose(g2(pts), expected, rtol=1e-13)

    def test_direction_validation(self):
        model = models.random_instance(3, 5)
        prob, dec = smoothing_parts(model)
        with pytest.raises(ValueError):
            pricing.smoothed_integrand_v(prob, [1.0, 0.0], dec)
        with pytest.raises(ValueError):
            pricing.smoothed_integrand_v(prob, [1.0, 0.5, 0.0], dec)
        with pytest.raises(ValueError):
            pricing.smoothed_integrand_v(prob, [0.0, 0.0, 0.0], dec)

    def test_integrand_is_callable_record(self):
        f = pricing.Integrand(dim=2, func=lambda p: p[:, 0], label="probe")
        pts = np.arange(6.0).reshape(3, 2)
        np.testing.assert_allclose(f(pts), [0.0, 2.0, 4.0])


class TestSmoothingIdentities:
    def test_tower_property(self):
        model = models.random_instance(3, 41)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        g = pricing.smoothed_integrand(prob, dec)
        m_raw, se_raw = pricing.mc_mean_se(f, 200_000, RngSpec(7))
        m_cs, se_cs = pricing.mc_mean_se(g, 200_000, RngSpec(8))
        assert abs(m_raw - m_cs) <= 3.0 * math.hypot(se_raw, se_cs)

    def test_smoothing_reduces_variance(self):
        for seed in (41, 42, 43):
            model = models.random_instance(3, seed)
            prob, dec = smoothing_parts(model)
            f = pricing.raw_integrand(prob, dec)
            g = pricing.smoothed_integrand(prob, dec)
            _, se_raw = pricing.mc_mean_se(f, 50_000, RngSpec(9))
            _, se_cs = pricing.mc_mean_se(g, 50_000, RngSpec(9))
            assert se_cs < se_raw

    def test_single_asset_smoothing_is_exact(self):
        model = models.BlackScholesBasket(
            S0=np.array([12.0]),
            sigma=np.array([0.35]),
            rho=np.array([[1.0]]),
            c=np.array([0.9]),
            K=10.0,
            T=2.0,
        )
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        assert g.dim == 0
        value, state = pricing.price_asg(g, 1e-10)
        exact = bs_price(0.9 * 12.0, 10.0, 0.35 * math.sqrt(2.0))
        np.testing.assert_allclose(value, exact, rtol=1e-14)
        assert state.evaluations == 1

    def test_moneyness_ordering(self):
        for d in (2, 3, 5):
            prices = {}
            for mode in ("itm", "atm", "otm"):
                model = models.random_instance(d, 100 + d, mode)
                prob, dec = smoothing_parts(model)
                g = pricing.smoothed_integrand(prob, dec)
                prices[mode], _ = pricing.price_asg(g, 1e-7)
                forward = model.forward()
                assert prices[mode] <= forward + 1e-10
                assert prices[mode] >= forward - model.K - 1e-10
            assert prices["itm"] > prices["atm"] > prices["otm"]


class TestMonteCarlo:
    def test_constant_is_recovered_exactly(self):
        f = pricing.Integrand(dim=2, func=lambda p: np.full(len(p), 3.25), label="c")
        med, runs = pricing.price_mc(f, 1000, RngSpec(5), runs=4)
        assert med == 3.25
        np.testing.assert_array_equal(runs, 3.25)

    def test_median_over_streams(self):
        f = pricing.Integrand(dim=1, func=lambda p: p[:, 0] ** 2, label="sq")
        med, runs = pricing.price_mc(f, 4000, RngSpec(11), runs=20)
        assert runs.shape == (20,)
        assert med == np.median(runs)
        np.testing.assert_allclose(med, 1.0, rtol=0.1)

    def test_run_streams_are_indexed(self):
        f = pricing.Integrand(dim=2, func=lambda p: p.sum(axis=1), label="s")
        _, runs = pricing.price_mc(f, 256, RngSpec(21), runs=3)
        gen = RngSpec(base_seed=21, stream_id=1).generator()
        expected = float(np.mean(gen.standard_normal((256, 2)).sum(axis=1)))
        np.testing.assert_allclose(runs[1], expected, rtol=1e-12)

    def test_deterministic_replay(self):
        model = models.random_instance(2, 3)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        a = pricing.price_mc(f, 2048, RngSpec(33))
        b = pricing.price_mc(f, 2048, RngSpec(33))
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_mean_se_against_direct(self):
        f = pricing.Integrand(dim=1, func=lambda p: p[:, 0], label="z")
        mean, se = pricing.mc_mean_se(f, 10_000, RngSpec(13))
        vals = RngSpec(13).generator().standard_normal((10_000, 1))[:, 0]
        np.testing.assert_allclose(mean, vals.mean(), rtol=1e-10)
        np.testing.assert_allclose(se, vals.std() / 100.0, rtol=1e-6)

    def test_estimate_tracks_reference(self):
        model = models.random_instance(3, 77)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        mean, se = pricing.mc_mean_se(f, 500_000, RngSpec(14))
        assert abs(mean - ref) <= 3.0 * se

    def test_input_validation(self):
        f = pricing.Integrand(dim=1, func=lambda p: p[:, 0], label="z")
        with pytest.raises(ValueError):
            pricing.price_mc(f, 0, RngSpec(1))
        with pytest.raises(ValueError):
            pricing.price_mc(f, 10, RngSpec(1), runs=0)
        with pytest.raises(ValueError):
            pricing.mc_mean_se(f, 0, RngSpec(1))


class TestQuasiMonteCarlo:
    def test_deterministic(self):
        model = models.random_instance(3, 19)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        assert pricing.price_qmc(g, 4096) == pricing.price_qmc(g, 4096)

    def test_smoothed_accuracy(self):
        model = models.random_instance(3, 19)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        est = pricing.price_qmc(g, 3 * 6**5)
        assert abs(est / ref - 1.0) < 1e-4

    def test_raw_accuracy(self):
        model = models.random_instance(3, 19)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        est = pricing.price_qmc(f, 3 * 6**5)
        assert abs(est / ref - 1.0) < 1e-3

    def test_zero_dimension_is_direct(self):
        g = pricing.Integrand(dim=0, func=lambda p: np.full(len(p), 2.5), label="c")
        assert pricing.price_qmc(g, 100) == 2.5

    def test_rejects_empty_budget(self):
        g = pricing.Integrand(dim=1, func=lambda p: p[:, 0], label="z")
        with pytest.raises(ValueError):
            pricing.price_qmc(g, 0)


class TestAdaptiveSparseGrid:
    def test_constant_integrand(self):
        f = pricing.Integrand(dim=3, func=lambda p: np.ones(len(p)), label="one")
        value, state = pricing.price_asg(f, 1e-8)
        np.testing.assert_allclose(value, 1.0, atol=1e-13)

    def test_three_asset_cost_and_accuracy(self):
        model = models.random_instance(3, 11)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        ref, _ = pricing.price_asg(g, 1e-11)
        value, state = pricing.price_asg(g, 1e-9)
        assert abs(value / ref - 1.0) <= 1e-8
        assert state.evaluations <= 500
        assert state.distinct_points <= 150

    def test_tolerance_sweep_tightens(self):
        model = models.random_instance(4, 29)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        ref, _ = pricing.price_asg(g, 1e-10)
        errors = []
        costs = []
        for tol in (1e-3, 1e-5, 1e-7):
            value, state = pricing.price_asg(g, tol)
            errors.append(abs(value / ref - 1.0))
            costs.append(state.evaluations)
        assert errors[-1] < errors[0]
        assert costs == sorted(costs)
        assert errors[-1] <= 1e-6

    def test_replay_is_identical(self):
        model = models.random_instance(3, 47)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        a, sa = pricing.price_asg(g, 1e-7)
        b, sb = pricing.price_asg(g, 1e-7)
        assert a == b
        assert sa.evaluations == sb.evaluations
        assert sa.old_set == sb.old_set

    def test_zero_dimension_is_direct(self):
        g = pricing.Integrand(dim=0, func=lambda p: np.full(len(p), 1.5), label="c")
        value, state = pricing.price_asg(g, 1e-6)
        assert value == 1.5
        assert state.evaluations == 1


class TestControlVariate:
    def quadratic(self, dim):
        def func(points):
            p = np.asarray(points, dtype=float)
            return (
                1.5
                + 0.3 * p[:, 0]
                - 0.2 * p[:, 1]
                + 0.1 * p[:, 0] ** 2
                + 0.25 * p[:, 1] ** 2
                + 0.4 * p[:, 0] * p[:, 1]
            )

        return pricing.Integrand(dim=dim, func=func, label="quad")

    def test_polynomial_has_no_sampling_error(self):
        f = self.quadratic(2)
        exact = 1.5 + 0.1 + 0.25
        est_mc = pricing.price_cv(f, 50, mode="mc", rng=RngSpec(3))
        est_qmc = pricing.price_cv(f, 50, mode="qmc")
        np.testing.assert_allclose(est_mc, exact, rtol=1e-12)
        np.testing.assert_allclose(est_qmc, exact, rtol=1e-12)

    def test_beats_plain_monte_carlo(self):
        model = models.random_instance(3, 53)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        n = 4096
        plain = pricing.mc_mean_se(g, n, RngSpec(17))[0]
        with_cv = pricing.price_cv(g, n, mode="mc", rng=RngSpec(17))
        assert abs(with_cv - ref) < abs(plain - ref)

    def test_qmc_mode_matches_reference(self):
        model = models.random_instance(3, 53)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        g = pricing.smoothed_integrand(prob, dec)
        est = pricing.price_cv(g, 3 * 6**5, mode="qmc")
        assert abs(est / ref - 1.0) < 1e-5

    def test_zero_dimension_is_direct(self):
        g = pricing.Integrand(dim=0, func=lambda p: np.full(len(p), 0.75), label="c")
        assert pricing.price_cv(g, 10, mode="qmc") == 0.75

    def test_input_validation(self):
        f = self.quadratic(2)
        with pytest.raises(ValueError):
            pricing.price_cv(f, 0, mode="qmc")
        with pytest.raises(ValueError):
            pricing.price_cv(f, 10, mode="mc")
        with pytest.raises(ValueError):
            pricing.price_cv(f, 10, mode="latin")


class TestVarianceGamma:
    def semi_analytic_single_asset(self, model):
        rule = rules1d.laguerre_sequence(model.T / model.nu - 1.0).rule(40)
        w = model.c[0] * model.S0[0] * math.exp(
            (model.r + model.omegas()[0]) * model.T
        )
        sig = model.sigma[0]
        theta = model.theta[0]
        total = 0.0
        for u, weight in zip(rule.nodes, rule.weights):
            y = model.nu * u
            s0 = w * math.exp(theta * y + 0.5 * y * sig * sig)
            total += weight * pricing.bs_call(s0, model.K, math.sqrt(y) * sig)
        return math.exp(-model.r * model.T) * total

    def single_asset(self, K):
        return models.VarianceGammaBasket(
            S0=np.array([10.0]),
            sigma=np.array([0.25]),
            rho=np.array([[1.0]]),
            c=np.array([1.0]),
            K=K,
            theta=np.array([-0.15]),
            nu=0.4,
        )

    def test_single_asset_in_the_money(self):
        model = self.single_asset(8.0)
        expected = self.semi_analytic_single_asset(model)
        value, _ = pricing.price_vg_smoothed(model, 1e-9)
        np.testing.assert_allclose(value, expected, rtol=1e-8)

    def test_single_asset_at_the_money(self):
        model = self.single_asset(10.0)
        expected = self.semi_analytic_single_asset(model)
        value, _ = pricing.price_vg_smoothed(model, 1e-7)
        np.testing.assert_allclose(value, expected, rtol=1e-6)

    def test_rescaled_decomposition_matches_fresh_one(self):
        model = models.vg_example(modified=True)
        g = pricing.vg_smoothed_integrand(model)
        rng = np.random.default_rng(6)
        for y in (0.2, 0.7, 1.9):
            zbar = rng.standard_normal((5, 2))
            prob_y = models.effective_vg(model, y)
            dec_y = linalg.rank_one_reduce(prob_y.Sigma)
            g_y = pricing.smoothed_integrand(prob_y, dec_y)
            pts = np.column_stack([np.full(5, y), zbar])
            np.testing.assert_allclose(g(pts), g_y(zbar), rtol=1e-10)

    def test_smoothed_and_raw_sampling_agree(self):
        model = models.vg_example(modified=True)
        m_s, se_s = pricing.price_vg_mc(model, 200_000, RngSpec(3), return_se=True)
        m_r, se_r = pricing.price_vg_mc(
            model, 200_000, RngSpec(4), raw=True, return_se=True
        )
        assert abs(m_s - m_r) <= 3.0 * math.hypot(se_s, se_r)
        assert se_s < se_r

    def test_adaptive_matches_sampling(self):
        model = models.vg_example(modified=True)
        value, _ = pricing.price_vg_smoothed(model, 1e-7)
        mean, se = pricing.price_vg_mc(model, 10**6, RngSpec(5), return_se=True)
        assert abs(value - mean) <= 3.0 * se

    def test_partial_direction_runs_on_weak_smoothing(self):
        model = models.vg_example()
        cs, _ = pricing.price_vg_smoothed(model, 1e-3)
        cs2, _ = pricing.price_vg_smoothed(model, 1e-3, v=[1.0, 1.0, 0.0])
        assert abs(cs / cs2 - 1.0) < 5e-3

    def test_raw_integrand_dimension(self):
        model = models.vg_example()
        f = pricing.vg_raw_integrand(model)
        assert f.dim == 4
        assert f.label == "VG-raw"

    def test_direction_validation(self):
        model = models.vg_example()
        with pytest.raises(ValueError):
            pricing.vg_smoothed_integrand(model, v=[0.5, 1.0, 0.0])

    def test_mc_needs_samples(self):
        model = models.vg_example()
        with pytest.raises(ValueError):
            pricing.price_vg_mc(model, 0, RngSpec(1))


class TestReferencePrice:
    def test_tolerance_schedule(self):
        assert pricing.reference_tolerance(2) == 1e-12
        assert pricing.reference_tolerance(3) == 1e-11
        assert pricing.reference_tolerance(5) == 1e-10
        assert pricing.reference_tolerance(8) == 1e-9
        assert pricing.reference_tolerance(25) == 1e-7
        with pytest.raises(ValueError):
            pricing.reference_tolerance(0)

    def test_single_asset_reference_is_exact(self):
        model = models.BlackScholesBasket(
            S0=np.array([20.0]),
            sigma=np.array([0.3]),
            rho=np.array([[1.0]]),
            c=np.array([1.0]),
            K=18.0,
        )
        ref = pricing.reference_price(model)
        np.testing.assert_allclose(ref, bs_price(20.0, 18.0, 0.3), rtol=1e-14)

    def test_reference_agrees_with_sampling(self):
        model = models.random_instance(5, 61)
        ref = pricing.reference_price(model)
        prob, dec = smoothing_parts(model)
        f = pricing.raw_integrand(prob, dec)
        mean, se = pricing.mc_mean_se(f, 400_000, RngSpec(23))
        assert abs(mean - ref) <= 3.0 * se


class TestEstimateRecord:
    def test_defaults(self):
        rec = pricing.EstimateRecord(
            method="MC", n_points=100, estimate=1.25, rel_error=None, seconds=0.1
        )
        assert rec.status == "ok"
        assert rec.rel_error is None

    def test_fields_round_trip(self):
        rec = pricing.EstimateRecord(
            method="aSG+CS",
            n_points=341,
            estimate=1.773,
            rel_error=1.3e-4,
            seconds=0.05,
            status="budget",
        )
        assert rec.method == "aSG+CS"
        assert rec.n_points == 341
        assert rec.status == "budget"
