import math

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from obsdriven.expfamily import (
    Family,
    FamilySpec,
    Support,
    cdf,
    check_observations,
    log_density,
    log_density_mean,
    log_kernel,
    mean_from_natural,
    natural_from_mean,
    quantile,
    sample,
    variance,
    variance_of_mean,
)
from obsdriven.exceptions import (
    InfiniteQuantileError,
    InvalidMeanError,
    InvalidObservationError,
    InvalidParameterError,
)

POIS = FamilySpec.poisson()
NB8 = FamilySpec.negbinomial(8)
GEOM = FamilySpec.geometric()
BIN1 = FamilySpec.binomial(1)
BIN10 = FamilySpec.binomial(10)
GAM2 = FamilySpec.gamma(2)

FAMILIES = [POIS, NB8, GEOM, BIN10, FamilySpec.negbinomial(2.5), FamilySpec.gamma(3.0)]


def scipy_law(f, x):
    """Independent oracle distribution with mean x."""
    if f.kind is Family.POISSON:
        return stats.poisson(x)
    if f.kind in (Family.NEGBINOMIAL, Family.GEOMETRIC):
        r = f.nuisance
        return stats.nbinom(r, r / (r + x))
    if f.kind is Family.BINOMIAL:
        return stats.binom(int(f.nuisance), x / f.nuisance)
    return stats.gamma(f.nuisance, scale=x / f.nuisance)


class TestFamilySpec:
    def test_support(self):
        assert POIS.support is Support.NONNEGATIVE_INTEGER
        assert GAM2.support is Support.NONNEGATIVE_REAL
        assert not GAM2.is_discrete

    def test_geometric_is_nb1(self):
        assert GEOM.nuisance == 1.0
        assert GEOM.code == FamilySpec.negbinomial(1).code

    @pytest.mark.parametrize("bad", [0, -1, math.inf, None])
    def test_nuisance_validation(self, bad):
        with pytest.raises(InvalidParameterError):
            FamilySpec.negbinomial(bad)

    def test_binomial_m_integer(self):
        with pytest.raises(InvalidParameterError):
            FamilySpec.binomial(2.5)

    @pytest.mark.parametrize("f", FAMILIES)
    def test_dict_round_trip(self, f):
        assert FamilySpec.from_dict(f.to_dict()) == f


class TestMeanMaps:
    def test_examples(self):
        assert mean_from_natural(POIS, 0.0) == pytest.approx(1.0)
        assert mean_from_natural(GAM2, -1.0) == pytest.approx(2.0)
        assert mean_from_natural(NB8, math.log(0.5)) == pytest.approx(8.0)
        assert natural_from_mean(POIS, 1.0) == 0.0
        assert natural_from_mean(NB8, 8.0) == pytest.approx(math.log(0.5))
        assert natural_from_mean(FamilySpec.binomial(2), 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_nb_mean_against_summation(self):
        eta = math.log(0.5)
        k = np.arange(400)
        pmf = np.exp([log_density(NB8, eta, kk) for kk in k])
        assert_allclose(np.sum(k * pmf), mean_from_natural(NB8, eta), rtol=1e-10)

    def test_domain_errors(self):
        with pytest.raises(InvalidParameterError):
            mean_from_natural(NB8, 0.5)
        with pytest.raises(InvalidParameterError):
            mean_from_natural(GAM2, 0.0)
        with pytest.raises(InvalidMeanError):
            natural_from_mean(BIN10, 10.0)
        with pytest.raises(InvalidMeanError):
            natural_from_mean(POIS, 0.0)

    @pytest.mark.parametrize("f", FAMILIES)
    def test_round_trip(self, f):
        hi = f.upper_mean
        xs = np.linspace(0.05, 9.9, 40) if math.isfinite(hi) else np.geomspace(1e-3, 1e3, 40)
        back = [mean_from_natural(f, natural_from_mean(f, x)) for x in xs]
        assert_allclose(back, xs, rtol=1e-12)

    def test_mean_increasing(self):
        etas = np.linspace(-3, -0.01, 30)
        means = [mean_from_natural(NB8, e) for e in etas]
        assert np.all(np.diff(means) > 0)


class TestVariance:
    def test_examples(self):
        assert variance(POIS, 0.0) == pytest.approx(1.0)
        assert variance(BIN1, 0.0) == pytest.approx(0.25)
        assert variance(NB8, math.log(0.5)) == pytest.approx(16.0)

    @pytest.mark.parametrize("f", FAMILIES)
    @pytest.mark.parametrize("x", [0.3, 2.0, 7.5])
    def test_matches_oracle(self, f, x):
        eta = natural_from_mean(f, x)
        assert_allclose(variance(f, eta), scipy_law(f, x).var(), rtol=1e-6)

    def test_vectorized(self):
        assert_allclose(variance_of_mean(NB8, [8.0, 4.0]), [16.0, 6.0])


class TestDensity:
    def test_examples(self):
        assert log_density(POIS, 0.0, 0) == pytest.approx(-1.0)
        assert log_density(BIN1, 0.0, 1) == pytest.approx(math.log(0.5))
        assert log_density(NB8, math.log(0.5), 0) == pytest.approx(8 * math.log(0.5))

    def test_kernel_excludes_base_measure(self):
        # Poisson: log h(y) = -log y!
        eta = 0.7
        assert_allclose(log_density(POIS, eta, 4) - log_kernel(POIS, eta, 4), -math.lgamma(5))

    @pytest.mark.parametrize("f", FAMILIES)
    def test_matches_scipy(self, f):
        x = 3.3
        law = scipy_law(f, x)
        ys = np.array([0.0, 1.0, 2.0, 5.0, 9.0]) if f.is_discrete else np.array([0.1, 1.0, 3.3, 8.0])
        oracle = law.logpmf(ys) if f.is_discrete else law.logpdf(ys)
        assert_allclose(log_density_mean(f, x, ys), oracle, rtol=1e-10)

    @pytest.mark.parametrize("f", [POIS, NB8, GEOM, BIN10])
    def test_normalized_discrete(self, f):
        x = 4.0
        eta = natural_from_mean(f, x)
        total = sum(math.exp(log_density(f, eta, k)) for k in range(400) if not (f.kind is Family.BINOMIAL and k > 10))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_normalized_gamma(self):
        eta = natural_from_mean(GAM2, 1.7)
        val, _ = integrate.quad(lambda y: math.exp(log_density(GAM2, eta, y)), 0, np.inf)
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("y", [-1, 1.5])
    def test_support_violation(self, y):
        with pytest.raises(InvalidObservationError):
            log_density(POIS, 0.0, y)

    def test_binomial_above_m(self):
        with pytest.raises(InvalidObservationError):
            check_observations(BIN10, [3, 11])


class TestCdfQuantile:
    def test_examples(self):
        assert cdf(POIS, 1.0, -1) == 0.0
        assert cdf(POIS, 1.0, 0) == pytest.approx(math.exp(-1))
        assert cdf(POIS, 1.0, 1) == pytest.approx(2 * math.exp(-1))
        assert quantile(POIS, 1.0, 0.0) == 0
        assert quantile(POIS, 1.0, 0.5) == 1
        assert quantile(BIN1, 0.5, 0.75) == 1

    @pytest.mark.parametrize("f", FAMILIES)
    def test_cdf_matches_scipy(self, f):
        x = 2.7
        ys = np.array([0.0, 1.0, 2.0, 4.0, 8.0]) if f.is_discrete else np.array([0.01, 0.5, 2.7, 9.0])
        assert_allclose(cdf(f, x, ys), scipy_law(f, x).cdf(ys), rtol=1e-9, atol=1e-14)

    @pytest.mark.parametrize("f", FAMILIES)
    def test_quantile_matches_scipy(self, f):
        x = 2.7
        u = np.array([0.01, 0.2, 0.5, 0.8, 0.999])
        got = quantile(f, x, u)
        want = scipy_law(f, x).ppf(u)
        if f.is_discrete:
            assert_array_equal(got, want)
        else:
            assert_allclose(got, want, rtol=1e-8)

    def test_infinite_quantile(self):
        with pytest.raises(InfiniteQuantileError):
            quantile(POIS, 1.0, 1.0)
        assert quantile(BIN10, 4.0, 1.0) == 10

    def test_level_outside_unit_interval(self):
        with pytest.raises(InvalidParameterError):
            quantile(POIS, 1.0, 1.5)

    @pytest.mark.parametrize("f", FAMILIES)
    def test_stochastic_monotonicity(self, f):
        ys = np.arange(0, 15, dtype=float) if f.is_discrete else np.linspace(0.1, 15, 30)
        lo = cdf(f, 1.5, ys)
        hi = cdf(f, 4.5, ys)
        assert np.all(lo >= hi - 1e-15)


@settings(max_examples=60, deadline=None)
@given(
    fi=st.integers(0, len(FAMILIES) - 1),
    x=st.floats(0.05, 9.5),
    u=st.floats(0.0, 0.999),
)
def test_quantile_is_generalized_inverse(fi, x, u):
    f = FAMILIES[fi]
    q = quantile(f, x, u)
    assert cdf(f, x, q) >= u - 1e-12
    if f.is_discrete and q > 0:
        assert cdf(f, x, q - 1) < u


@settings(max_examples=40, deadline=None)
@given(x1=st.floats(0.1, 9.0), x2=st.floats(0.1, 9.0), u=st.floats(0.0, 0.99))
def test_quantile_monotone_in_mean(x1, x2, u):
    lo, hi = sorted((x1, x2))
    for f in (POIS, NB8, BIN10):
        assert quantile(f, lo, u) <= quantile(f, hi, u)


class TestSample:
    def test_deterministic(self):
        a = sample(POIS, 1.0, np.random.default_rng(3), size=10)
        b = sample(POIS, 1.0, np.random.default_rng(3), size=10)
        assert_array_equal(a, b)

    def test_poisson_mean(self):
        y = sample(POIS, 3.0, np.random.default_rng(1), size=100_000)
        assert abs(y.mean() - 3.0) < 3 * math.sqrt(3 / 1e5)

    def test_nb_variance(self):
        y = sample(NB8, 8.0, np.random.default_rng(2), size=100_000)
        assert y.var(ddof=1) == pytest.approx(16.0, rel=0.05)

    @pytest.mark.parametrize("f", [POIS, NB8, BIN10, GAM2])
    @pytest.mark.parametrize("pair", [(1.0, 2.5), (3.0, 3.4)])
    def test_coupling_identity(self, f, pair):
        u = np.random.default_rng(9).random(50_000)
        d = np.abs(quantile(f, pair[0], u) - quantile(f, pair[1], u))
        se = d.std(ddof=1) / math.sqrt(d.size)
        assert abs(d.mean() - abs(pair[0] - pair[1])) < 3 * se + 1e-12
