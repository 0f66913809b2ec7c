import math

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from obsdriven.dynamics import ExpAR, Linear, LinearPQ, Spline, step, unconditional_mean
from obsdriven.exceptions import (
    InvalidParameterError,
    NonContractingError,
    UndefinedACFError,
    UnsupportedVariantError,
)
from obsdriven.expfamily import FamilySpec
from obsdriven.simulate import (
    InitPolicy,
    ModelSpec,
    acf,
    batch_means_se,
    gmc_estimate,
    mixing_bound_check,
    simulate_path,
    split_rng,
)

POIS = FamilySpec.poisson()
LIN = Linear(0.5, 0.3, 0.2)
SIM_SPLINE = Spline(0.5, 0.5, 0.4, (-0.2,), (5.0,))


def python_spline_path(n, seed, n_burn=500):
    """Reference simulator using numpy's own Poisson sampler."""
    rng = np.random.default_rng(seed)
    x = SIM_SPLINE.delta / (1 - SIM_SPLINE.alpha)
    out = np.empty(n)
    for t in range(n + n_burn):
        y = rng.poisson(x)
        if t >= n_burn:
            out[t - n_burn] = y
        x = 0.5 + 0.5 * x + 0.4 * y - 0.2 * max(y - 5.0, 0.0)
    return out


class TestSimulatePath:
    def test_iid_poisson_mean(self):
        p = simulate_path(ModelSpec(POIS, Linear(2.0, 0.0, 0.0)), 100_000, 1)
        assert abs(p.y.mean() - 2.0) < 3 * math.sqrt(2 / 1e5)

    def test_deterministic(self):
        m = ModelSpec(POIS, SIM_SPLINE)
        a = simulate_path(m, 500, 42)
        b = simulate_path(m, 500, 42)
        assert_array_equal(a.y, b.y)
        assert_array_equal(a.x, b.x)
        assert a.seed == 42

    @pytest.mark.parametrize("d", [LIN, SIM_SPLINE, ExpAR(0.2, 0.3, 0.5, 0.3)])
    def test_recursion_invariant(self, d):
        p = simulate_path(ModelSpec(POIS, d, InitPolicy.fixed(2.0)), 300, 3)
        assert p.x[0] == 2.0
        for t in range(1, 300):
            assert p.x[t] == pytest.approx(step(d, p.x[t - 1], p.y[t - 1]), rel=1e-14, abs=1e-300)

    def test_linear_pq_recursion(self):
        d = LinearPQ(1.0, (0.2, 0.1), (0.3, 0.1))
        p = simulate_path(ModelSpec(POIS, d, InitPolicy.fixed(2.0)), 200, 4)
        for t in range(2, 200):
            want = step(d, [p.x[t - 1], p.x[t - 2]], [p.y[t - 1], p.y[t - 2]])
            assert p.x[t] == pytest.approx(want)

    def test_spline_long_run_mean_against_reference(self):
        ours = simulate_path(ModelSpec(POIS, SIM_SPLINE), 400_000, 5).y
        ref = python_spline_path(200_000, 6)
        se = math.hypot(batch_means_se(ours), batch_means_se(ref))
        assert abs(ours.mean() - ref.mean()) < 3 * se
        assert ours.mean() == pytest.approx(ref.mean(), rel=0.01)

    @pytest.mark.parametrize("f", [POIS, FamilySpec.negbinomial(3), FamilySpec.binomial(8),
                                   FamilySpec.gamma(2.0)])
    def test_stationary_mean(self, f):
        d = Linear(0.6, 0.4, 0.3)
        y = simulate_path(ModelSpec(f, d), 200_000, 7).y
        assert abs(y.mean() - unconditional_mean(d)) < 3 * batch_means_se(y)

    def test_non_contracting(self):
        m = ModelSpec(POIS, Linear(0.5, 0.5, 0.5))
        with pytest.raises(NonContractingError):
            simulate_path(m, 10, 0)
        with pytest.warns(RuntimeWarning):
            p = simulate_path(m, 10, 0, force=True)
        assert len(p) == 10

    def test_unconditional_mean_start(self):
        p = simulate_path(ModelSpec(POIS, LIN, InitPolicy.unconditional_mean()), 5, 0)
        assert p.x[0] == pytest.approx(1.0)

    def test_csv(self, tmp_path):
        p = simulate_path(ModelSpec(POIS, LIN), 4, 0)
        p.to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "t,y,x"
        assert len(lines) == 5
        t, y, x = lines[1].split(",")
        assert t == "1" and int(y) == p.y[0] and float(x) == p.x[0]

    def test_model_round_trip(self):
        m = ModelSpec(FamilySpec.binomial(5), SIM_SPLINE, InitPolicy.fixed(1.5))
        assert ModelSpec.from_dict(m.to_dict()) == m


class TestSplitRng:
    def test_independent_and_reproducible(self):
        a = [g.random() for g in split_rng(3, 4)]
        b = [g.random() for g in split_rng(3, 4)]
        assert a == b
        assert len(set(a)) == 4


class TestCoupling:
    def test_gmc_bound_linear(self):
        rep = gmc_estimate(ModelSpec(POIS, LIN), 15, 5000, 1, starts=(1.0, 10.0))
        assert rep.contraction == pytest.approx(0.5)
        assert np.all(rep.within_bound)
        assert rep.mean_abs_diff[0] == 9.0

    def test_gmc_iid_coincide(self):
        rep = gmc_estimate(ModelSpec(POIS, Linear(2.0, 0.0, 0.0)), 3, 100, 1, starts=(1.0, 10.0))
        assert_allclose(rep.mean_abs_diff[1:], 0.0)

    def test_gmc_decay_rate_spline(self):
        rep = gmc_estimate(ModelSpec(POIS, SIM_SPLINE), 20, 10_000, 2)
        assert rep.decay_rate <= math.log(0.9) + 0.05

    @pytest.mark.parametrize("f", [POIS, FamilySpec.geometric()])
    def test_mixing_bound(self, f):
        rep = mixing_bound_check(ModelSpec(f, LIN), 40, 10_000, 3)
        assert np.all(rep.holds[:10])
        assert np.all(rep.disagreement <= 1.0)

    def test_mixing_continuous_unsupported(self):
        with pytest.raises(UnsupportedVariantError):
            mixing_bound_check(ModelSpec(FamilySpec.gamma(2.0), LIN), 5, 10, 0)


class TestACF:
    def test_lag_zero(self):
        assert acf([1.0, 3.0, 2.0, 5.0], 2)[0] == 1.0

    def test_white_noise(self):
        z = np.random.default_rng(0).standard_normal(100_000)
        assert np.all(np.abs(acf(z, 20)[1:]) < 3 / math.sqrt(z.size))

    def test_matches_correlate(self):
        z = np.random.default_rng(1).standard_normal(50)
        c = np.correlate(z - z.mean(), z - z.mean(), "full")[49:]
        assert_allclose(acf(z, 5), (c / c[0])[:6])

    def test_constant(self):
        with pytest.raises(UndefinedACFError):
            acf(np.ones(10), 2)

    def test_too_short(self):
        with pytest.raises(InvalidParameterError):
            acf([1.0, 2.0], 2)
