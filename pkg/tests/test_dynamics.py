import itertools
import math

import numpy as np
from numpy.testing import assert_allclose
import pytest

from obsdriven.dynamics import (
    ExpAR,
    Linear,
    LinearPQ,
    Spline,
    check_stationarity,
    dynamics_from_dict,
    partials,
    stationary_moments,
    step,
    unconditional_mean,
)
from obsdriven.exceptions import (
    InfiniteVarianceError,
    InvalidParameterError,
    InvalidStateError,
    UndefinedMeanError,
    UnsupportedVariantError,
)
from obsdriven.expfamily import FamilySpec

POIS = FamilySpec.poisson()
SIM_SPLINE = Spline(0.5, 0.5, 0.4, (-0.2,), (5.0,))


class TestStep:
    def test_examples(self):
        assert step(Linear(0.5, 0.5, 0.4), 1, 2) == pytest.approx(1.8)
        assert step(SIM_SPLINE, 1, 7) == pytest.approx(3.4)
        assert step(ExpAR(0.2, 0.3, 1.0, 0.3), 0, 0) == 0.0

    def test_spline_below_knot_is_linear(self):
        assert step(SIM_SPLINE, 2, 4) == step(Linear(0.5, 0.5, 0.4), 2, 4)

    def test_linear_pq(self):
        d = LinearPQ(1.0, (0.2, 0.1), (0.3,))
        assert step(d, [2.0, 1.0], [4.0]) == pytest.approx(1 + 0.4 + 0.1 + 1.2)
        with pytest.raises(InvalidParameterError):
            step(d, [2.0], [4.0])

    def test_negative_state(self):
        d = Spline(0.1, 0.0, 0.5, (-1.0,), (1.0,))
        with pytest.raises(InvalidStateError):
            step(d, 1.0, 10.0)

    def test_zero_knot_spline_equals_linear(self):
        sp = Spline(0.5, 0.3, 0.2)
        lin = Linear(0.5, 0.3, 0.2)
        for x, y in [(1.0, 0.0), (2.5, 7.0)]:
            assert step(sp, x, y) == step(lin, x, y)
        assert check_stationarity(sp, POIS) == check_stationarity(lin, POIS)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            Linear(-1.0, 0.3, 0.2)
        with pytest.raises(InvalidParameterError):
            Linear(1.0, -0.1, 0.2)
        with pytest.raises(InvalidParameterError):
            Spline(0.5, 0.3, 0.2, (0.1, 0.1), (5.0, 3.0))
        with pytest.raises(InvalidParameterError):
            Spline(0.5, 0.3, 0.2, (0.1,), (5.0, 6.0))

    @pytest.mark.parametrize("d", [Linear(0.5, 0.3, 0.2), SIM_SPLINE, ExpAR(0.2, 0.3, 1.0, 0.3),
                                   LinearPQ(1.0, (0.2, 0.1), (0.3,))])
    def test_dict_round_trip(self, d):
        assert dynamics_from_dict(d.to_dict()) == d


class TestStationarity:
    def test_examples(self):
        assert check_stationarity(Linear(0.5, 0.3, 0.2), POIS).is_contracting
        rep = check_stationarity(SIM_SPLINE, POIS)
        assert rep.is_contracting
        assert rep.clt_ok is None
        assert not check_stationarity(Linear(0.5, 0.6, 0.4), POIS).is_contracting

    def test_spline_regime_conditions(self):
        # regime slope turns negative
        assert not check_stationarity(Spline(0.5, 0.3, 0.2, (-0.3,), (5.0,))).is_contracting
        # alpha + regime slope reaches 1
        assert not check_stationarity(Spline(0.5, 0.3, 0.2, (0.5,), (5.0,))).is_contracting

    def test_spline_b_is_max_regime_slope(self):
        rep = check_stationarity(Spline(0.5, 0.2, 0.3, (0.2, -0.4), (3.0, 6.0)))
        assert rep.b_coeff == pytest.approx(0.5)

    def test_linear_pq(self):
        assert check_stationarity(LinearPQ(1.0, (0.2, 0.1), (0.3,))).is_contracting
        assert not check_stationarity(LinearPQ(1.0, (0.5, 0.3), (0.3,))).is_contracting

    def test_expar(self):
        assert check_stationarity(ExpAR(0.2, 0.3, 1.0, 0.3)).is_contracting
        assert not check_stationarity(ExpAR(0.5, 0.3, 1.0, 0.3)).is_contracting

    def test_binomial_extra_condition(self):
        f = FamilySpec.binomial(10)
        assert check_stationarity(Linear(1.0, 0.4, 0.5), f).is_contracting
        rep = check_stationarity(Linear(2.0, 0.4, 0.5), f)
        assert not rep.is_contracting
        assert rep.details["binomial_mean_below_m"] is False

    @pytest.mark.parametrize("f,ok", [
        (FamilySpec.negbinomial(1), False),   # 0.81 + 0.36 > 1
        (FamilySpec.negbinomial(8), True),
        (FamilySpec.gamma(0.5), False),
        (FamilySpec.binomial(5), True),
    ])
    def test_clt_condition(self, f, ok):
        assert check_stationarity(Linear(0.5, 0.3, 0.6), f).clt_ok is ok

    @pytest.mark.parametrize("d", [Linear(0.5, 0.3, 0.2), SIM_SPLINE, ExpAR(0.2, 0.3, 0.7, 0.3),
                                   Spline(0.5, 0.2, 0.3, (0.2, -0.4), (3.0, 6.0))])
    def test_lipschitz_bound_on_grid(self, d):
        rep = check_stationarity(d)
        a, b = rep.a_coeff, rep.b_coeff
        grid = list(itertools.product(np.linspace(0.0, 8.0, 9), np.arange(0.0, 12.0)))
        origin = step(d, 0.0, 0.0)
        for (x, y), (x2, y2) in itertools.product(grid[::3], grid[1::4]):
            assert abs(step(d, x, y) - step(d, x2, y2)) <= a * abs(x - x2) + b * abs(y - y2) + 1e-12
            assert step(d, x, y) <= origin + a * x + b * y + 1e-12

    def test_infinite_past_representation(self):
        d = Linear(0.5, 0.3, 0.2)
        ys = np.random.default_rng(0).poisson(2.0, size=60).astype(float)
        series = d.delta / (1 - d.alpha) + d.beta * sum(d.alpha**k * ys[-1 - k] for k in range(ys.size))
        for x0 in (0.1, 50.0):
            x = x0
            for yt in ys:
                x = step(d, x, yt)
            tol = d.alpha ** ys.size * (abs(x0) + 50.0) + 1e-12
            assert abs(x - series) <= tol


class TestMoments:
    def test_unconditional_mean(self):
        assert unconditional_mean(Linear(0.5, 0.3, 0.2)) == pytest.approx(1.0)
        assert unconditional_mean(Linear(2.0, 0.0, 0.0)) == pytest.approx(2.0)
        assert unconditional_mean(LinearPQ(1.0, (0.2, 0.1), (0.3,))) == pytest.approx(2.5)

    def test_unconditional_mean_errors(self):
        with pytest.raises(UndefinedMeanError):
            unconditional_mean(Linear(0.5, 0.6, 0.4))
        with pytest.raises(UnsupportedVariantError):
            unconditional_mean(SIM_SPLINE)

    def test_nb_example(self):
        mom = stationary_moments(Linear(0.5, 0.3, 0.2), FamilySpec.negbinomial(8))
        assert mom.var_x == pytest.approx(0.04 * 1.125 / 0.745, rel=1e-12)
        assert mom.var_x == pytest.approx(0.0604, abs=1e-4)

    def test_gamma_example(self):
        mom = stationary_moments(Linear(0.5, 0.3, 0.2), FamilySpec.gamma(2))
        assert mom.var_x == pytest.approx(0.02 / 0.73, rel=1e-12)
        assert mom.var_y == pytest.approx(1.5 * 0.02 / 0.73 + 0.5)

    @pytest.mark.slow
    def test_binomial_against_simulation(self):
        from obsdriven.simulate import ModelSpec, batch_means_se, simulate_path

        d, f = Linear(1.0, 0.3, 0.3), FamilySpec.binomial(6)
        y = simulate_path(ModelSpec(f, d), 500_000, 11).y
        mom = stationary_moments(d, f)
        sq = (y - y.mean()) ** 2
        assert abs(y.mean() - mom.mean) < 3 * batch_means_se(y)
        assert abs(sq.mean() - mom.var_y) < 3 * batch_means_se(sq)

    def test_poisson_iid(self):
        mom = stationary_moments(Linear(3.0, 0.0, 0.0), POIS)
        assert mom.var_y == pytest.approx(3.0)
        assert mom.var_x == 0.0

    def test_infinite_variance(self):
        with pytest.raises(InfiniteVarianceError):
            stationary_moments(Linear(0.5, 0.3, 0.6), FamilySpec.negbinomial(1))


class TestPartials:
    def test_linear(self):
        p = partials(Linear(0.5, 0.3, 0.2), 2.0, 3.0)
        assert p.d_dx == 0.3
        assert_allclose(p.d_dtheta, [1.0, 2.0, 3.0])

    def test_spline_knot_inactive(self):
        p = partials(SIM_SPLINE, 2.0, 3.0)
        assert p.d_dtheta[-1] == 0.0
        assert_allclose(partials(SIM_SPLINE, 2.0, 8.0).d_dtheta, [1.0, 2.0, 8.0, 3.0])

    @pytest.mark.parametrize("d", [Linear(0.5, 0.3, 0.2), SIM_SPLINE, ExpAR(0.2, 0.3, 1.0, 0.3),
                                   Spline(0.5, 0.2, 0.3, (0.2, -0.4), (3.0, 6.0))])
    def test_finite_differences(self, d):
        x, y, h = 1.3, 7.0 if isinstance(d, Spline) else 2.0, 1e-6
        p = partials(d, x, y)
        fd_x = (step(d, x + h, y) - step(d, x - h, y)) / (2 * h)
        assert p.d_dx == pytest.approx(fd_x, rel=1e-6)
        theta = d.params
        fd = []
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd.append((step(d.with_params(theta + e), x, y) - step(d.with_params(theta - e), x, y)) / (2 * h))
        assert_allclose(p.d_dtheta, fd, rtol=1e-6, atol=1e-9)
