import math

import numpy as np
import pytest
from scipy import stats

from latcount_core.errors import (
    DomainError,
    ParameterDomainError,
    UnsupportedFitError,
)
from latcount_model.marginals import (
    Family,
    MarginalSpec,
    cdf,
    cdf_grad,
    delta_big,
    family_variance,
    fit_theta,
    m3_series,
    moment_m,
    moment_mu,
    pmf,
    quantile,
    raw_moment,
    sf,
    tail_sum_inequality,
    theta_box,
    threshold_table,
)

ALL_FAMILIES = [
    MarginalSpec.bernoulli(0.3),
    MarginalSpec.binomial(5, 0.4),
    MarginalSpec.poisson(2.0),
    MarginalSpec.negbinomial(3, 0.5),
    MarginalSpec.mixture_poisson([0.3, 0.7], [1.0, 4.0]),
    MarginalSpec.cmp(2.0, 1.5),
]


class TestSpecValidation:
    def test_lambda_alias(self):
        spec = MarginalSpec.model_validate({"family": "poisson", "lambda": 2.0})
        assert spec.lam == 2.0
        assert spec.family == Family.POISSON

    @pytest.mark.parametrize(
        "build",
        [
            lambda: MarginalSpec.bernoulli(0.0),
            lambda: MarginalSpec.bernoulli(1.0),
            lambda: MarginalSpec.binomial(0, 0.5),
            lambda: MarginalSpec.poisson(-1.0),
            lambda: MarginalSpec.negbinomial(3, 1.2),
            lambda: MarginalSpec.mixture_poisson([0.3, 0.6], [1.0, 2.0]),
            lambda: MarginalSpec.cmp(2.0, 0.0),
        ],
    )
    def test_invalid_parameters(self, build):
        with pytest.raises(ParameterDomainError):
            build()

    def test_specs_are_hashable_and_equal_by_value(self):
        assert MarginalSpec.poisson(2.0) == MarginalSpec.poisson(2.0)
        assert len({MarginalSpec.poisson(2.0), MarginalSpec.poisson(2.0)}) == 1


class TestDistributionValues:
    def test_bernoulli_cdf(self):
        spec = MarginalSpec.bernoulli(0.3)
        assert cdf(spec, -1) == 0.0
        assert cdf(spec, 0) == pytest.approx(0.7)
        assert cdf(spec, 1) == 1.0

    @pytest.mark.parametrize(
        "spec, dist",
        [
            (MarginalSpec.binomial(5, 0.4), stats.binom(5, 0.4)),
            (MarginalSpec.poisson(2.0), stats.poisson(2.0)),
            (MarginalSpec.negbinomial(3, 0.5), stats.nbinom(3, 0.5)),
        ],
    )
    def test_matches_scipy(self, spec, dist):
        for n in range(12):
            assert cdf(spec, n) == pytest.approx(dist.cdf(n), abs=1e-14)
            assert pmf(spec, n) == pytest.approx(dist.pmf(n), abs=1e-14)

    def test_cmp_with_unit_dispersion_is_poisson(self):
        spec = MarginalSpec.cmp(2.0, 1.0)
        for n in range(15):
            assert pmf(spec, n) == pytest.approx(stats.poisson.pmf(n, 2.0), abs=1e-12)

    def test_mixture_pmf(self):
        spec = MarginalSpec.mixture_poisson([0.3, 0.7], [1.0, 4.0])
        expected = 0.3 * stats.poisson.pmf(3, 1.0) + 0.7 * stats.poisson.pmf(3, 4.0)
        assert pmf(spec, 3) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda s: s.family.value)
    def test_sf_complements_cdf(self, spec):
        for n in range(10):
            assert sf(spec, n) + cdf(spec, n) == pytest.approx(1.0, abs=1e-12)

    def test_negative_n_rejected(self):
        with pytest.raises(DomainError):
            cdf(MarginalSpec.poisson(1.0), -2)


class TestQuantile:
    def test_bernoulli_boundaries(self):
        spec = MarginalSpec.bernoulli(0.3)
        assert quantile(spec, 0.5) == 0
        assert quantile(spec, 0.7) == 0
        assert quantile(spec, 0.7000001) == 1

    def test_poisson_matches_scipy(self, rng):
        spec = MarginalSpec.poisson(3.0)
        for u in rng.uniform(0.001, 0.999, size=200):
            assert quantile(spec, u) == int(stats.poisson.ppf(u, 3.0))

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            quantile(MarginalSpec.poisson(1.0), u)


class TestThresholdTable:
    def test_bernoulli_half_single_threshold(self):
        table = threshold_table(MarginalSpec.bernoulli(0.5))
        np.testing.assert_array_equal(table.q_values, [0.0])
        assert table.n_max == 0

    def test_poisson_tail(self):
        table = threshold_table(MarginalSpec.poisson(2.0), 1e-14)
        assert table.tail_mass < 1e-14
        assert np.all(table.sf_values[:-1] >= 1e-14)
        assert np.all(np.diff(table.q_values) > 0.0)

    def test_symmetric_binomial_thresholds(self):
        table = threshold_table(MarginalSpec.binomial(4, 0.5))
        q = table.q_values
        assert len(q) == 4
        np.testing.assert_allclose(q, -q[::-1], atol=1e-12)

    def test_upper_thresholds_use_survival_function(self):
        spec = MarginalSpec.poisson(1.0)
        table = threshold_table(spec, 1e-14)
        last = table.n_values[-1]
        expected = -stats.norm.ppf(stats.poisson.sf(last, 1.0))
        assert table.q_values[-1] == pytest.approx(expected, rel=1e-10)


class TestGradients:
    def test_random_triples_match_central_difference(self, rng, random_spec):
        h = 1e-6
        for _ in range(100):
            spec = random_spec()
            n = int(rng.integers(0, 9))
            theta = spec.theta
            grad = cdf_grad(spec, n)
            free = range(len(theta))
            if spec.family == Family.MIXTURE_POISSON:
                # weights stay on the simplex; their partials are the component cdfs
                m = len(spec.weights)
                np.testing.assert_allclose(grad[:m], stats.poisson.cdf(n, spec.lambdas), rtol=1e-12)
                free = range(m, 2 * m)
            for k in free:
                up, down = theta.copy(), theta.copy()
                up[k] += h
                down[k] -= h
                numeric = (cdf(spec.with_theta(up), n) - cdf(spec.with_theta(down), n)) / (2 * h)
                assert grad[k] == pytest.approx(numeric, rel=1e-5, abs=1e-8), spec.describe()

    def test_mixture_gradient(self):
        spec = MarginalSpec.mixture_poisson([0.3, 0.7], [1.0, 4.0])
        n = 3
        grad = cdf_grad(spec, n)
        np.testing.assert_allclose(grad[:2], stats.poisson.cdf(n, [1.0, 4.0]), rtol=1e-12)
        h = 1e-6
        theta = spec.theta
        up, down = theta.copy(), theta.copy()
        up[2] += h
        down[2] -= h
        numeric = (cdf(spec.with_theta(up), n) - cdf(spec.with_theta(down), n)) / (2 * h)
        assert grad[2] == pytest.approx(numeric, rel=1e-5)

    def test_negbinomial_includes_r_derivative(self):
        spec = MarginalSpec.negbinomial(3, 0.5)
        assert cdf_grad(spec, 2).shape == (1,)
        assert cdf_grad(spec, 2, include_fixed=True).shape == (2,)

    def test_below_support_is_zero(self):
        np.testing.assert_array_equal(cdf_grad(MarginalSpec.poisson(2.0), -1), [0.0])


class TestMoments:
    @pytest.mark.parametrize("u", [0.5, 1.0, 1.7])
    def test_bernoulli_half(self, u):
        spec = MarginalSpec.bernoulli(0.5)
        assert moment_m(spec, 0, u) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-14)
        assert moment_m(spec, 3, u) == 0.0
        # gradient of C_0 = 1 - p is -1 and the Gaussian factors cancel at Q = 0
        assert moment_mu(spec, 0, u) == pytest.approx(1.0, rel=1e-14)

    def test_moment_m_monotone_on_sampled_grid(self, rng, random_spec):
        u_grid = np.sort(rng.uniform(0.2, 3.0, size=8))
        specs = [random_spec() for _ in range(30)]
        specs += [random_spec("bernoulli") for _ in range(5)]
        specs += [MarginalSpec.binomial(2, 0.5)]
        small_thresholds = 0
        for spec in specs:
            for k in range(5):
                values = [moment_m(spec, k, u) for u in u_grid]
                assert all(b >= a * (1 - 1e-12) for a, b in zip(values, values[1:])), spec.describe()
            if np.max(np.abs(threshold_table(spec).q_values)) <= 1.0:
                small_thresholds += 1
                for u in u_grid:
                    values = [moment_m(spec, k, u) for k in range(5)]
                    assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:])), spec.describe()
        assert small_thresholds >= 1

    def test_delta_bernoulli_is_zero(self):
        assert delta_big(MarginalSpec.bernoulli(0.4)) == 0.0

    def test_moment_domain(self):
        with pytest.raises(DomainError):
            moment_m(MarginalSpec.poisson(1.0), 0, 0.0)


class TestM3Series:
    def test_bernoulli_exact(self):
        res = m3_series(MarginalSpec.bernoulli(0.25))
        assert res.converged
        assert res.partial_sum == pytest.approx(2.0, rel=1e-14)

    def test_binomial_exact(self):
        big_n, p = 6, 0.3
        expected = sum(
            big_n * stats.binom.pmf(n, big_n - 1, p) / math.sqrt(stats.binom.sf(n, big_n, p))
            for n in range(big_n)
        )
        res = m3_series(MarginalSpec.binomial(big_n, p))
        assert res.converged
        assert res.partial_sum == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
    def test_poisson_converges(self, lam):
        assert m3_series(MarginalSpec.poisson(lam), n_cap=500).converged

    @pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
    def test_negbinomial_converges(self, p):
        assert m3_series(MarginalSpec.negbinomial(3, p), n_cap=500).converged

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
    def test_tail_sum_inequality(self, lam):
        check = tail_sum_inequality(MarginalSpec.poisson(lam))
        assert check.holds
        assert check.lhs <= check.rhs


class TestThetaBox:
    def test_zero_radius(self):
        spec = MarginalSpec.poisson(2.0)
        assert theta_box(spec, 0.0) == [spec]

    def test_grid_points(self):
        points = theta_box(MarginalSpec.poisson(2.0), 0.1, grid=3)
        np.testing.assert_allclose(sorted(p.lam for p in points), [1.9, 2.0, 2.1])

    def test_mixture_weights_stay_on_simplex(self):
        spec = MarginalSpec.mixture_poisson([0.4, 0.6], [1.0, 3.0])
        for point in theta_box(spec, 0.05, grid=3):
            assert math.fsum(point.weights) == pytest.approx(1.0, abs=1e-12)

    def test_leaving_domain(self):
        with pytest.raises(DomainError):
            theta_box(MarginalSpec.bernoulli(0.01), 0.05, grid=3)


class TestFitTheta:
    def test_poisson_mean(self):
        fit = fit_theta([0, 1, 2, 3, 4], "poisson")
        assert fit.spec.lam == pytest.approx(2.0)
        assert not fit.clipped

    def test_binomial_needs_trials(self):
        fit = fit_theta([0, 2, 4], "binomial", n_trials=4)
        assert fit.spec.p == pytest.approx(0.5)
        with pytest.raises(ParameterDomainError):
            fit_theta([0, 2, 4], "binomial")

    def test_negbinomial_known_r(self):
        fit = fit_theta([1, 3], "negbinomial", r=2)
        assert fit.spec.p == pytest.approx(0.5)
        assert fit.spec.r == 2

    def test_clipping(self):
        fit = fit_theta([0, 0, 0], "bernoulli")
        assert fit.clipped
        assert fit.spec.p == pytest.approx(1e-6)

    @pytest.mark.parametrize("family", ["cmp", "mixture_poisson"])
    def test_unsupported(self, family):
        with pytest.raises(UnsupportedFitError):
            fit_theta([1, 2, 3], family)

    def test_rejects_non_integer_samples(self):
        with pytest.raises(DomainError):
            fit_theta([0.5, 1.0], "poisson")


@pytest.mark.parametrize("spec", ALL_FAMILIES, ids=lambda s: s.family.value)
def test_family_variance_matches_summation(spec):
    summed = raw_moment(spec, 2) - raw_moment(spec, 1) ** 2
    assert family_variance(spec) == pytest.approx(summed, rel=1e-8)
