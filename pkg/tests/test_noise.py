import math

import numpy as np
import pytest
from scipy.integrate import quad

from smallmass import rng as _rng
from smallmass.core import EmpiricalMeasure
from smallmass.errors import UsageError
from smallmass.noise import (DriverState, NoiseModel, advance,
                             averaged_forcing, eval_field, init_stationary,
                             mixing_metadata, sigma_matrix)


def _gen(seed=0):
    return _rng.stream(seed, _rng.DIRECT, 9)


class TestInitStationary:
    def test_marginal_variance(self):
        model = NoiseModel.scalar_ou(3, gamma=1.0, sigma=1.0)
        draws = np.stack([init_stationary(model, s).xi for s in range(4000)])
        assert draws.var() == pytest.approx(1.0, rel=0.05)

    def test_zero_amplitude(self):
        model = NoiseModel.scalar_ou(2, gamma=1.0, sigma=0.0)
        assert np.array_equal(init_stationary(model, 5).xi, np.zeros(2))

    def test_same_seed_same_state(self):
        model = NoiseModel.scalar_ou(2, gamma=1.0, sigma=1.0)
        a, b = init_stationary(model, 42), init_stationary(model, 42)
        assert np.array_equal(a.xi, b.xi)
        assert a.fast_time == 0.0


class TestAdvance:
    def test_zero_lag_identity(self):
        model = NoiseModel.scalar_ou(1, gamma=2.0, sigma=1.0)
        st = init_stationary(model, 1)
        assert advance(st, model, 0.0, _gen()) is st

    def test_negative_lag_rejected(self):
        model = NoiseModel.scalar_ou(1, gamma=2.0, sigma=1.0)
        with pytest.raises(UsageError):
            advance(init_stationary(model, 1), model, -0.1, _gen())

    def test_autocorrelation(self):
        # corr(xi(0), xi(s)) = exp(-gamma*s) for the exact update
        model = NoiseModel.scalar_ou(1, gamma=2.0, sigma=1.0)
        gen = _gen(3)
        lag = 0.3
        x0 = np.empty(8000)
        x1 = np.empty(8000)
        for i in range(8000):
            st = DriverState(xi=model.sigma * gen.standard_normal(1), fast_time=0.0)
            x0[i] = st.xi[0]
            x1[i] = advance(st, model, lag, gen).xi[0]
        corr = np.corrcoef(x0, x1)[0, 1]
        assert corr == pytest.approx(math.exp(-2.0 * lag), abs=0.03)

    def test_full_decorrelation(self):
        # a long lag forgets the initial value entirely: the new draw is
        # marginal N(0, sigma^2) and uncorrelated with where it started
        model = NoiseModel.scalar_ou(1, gamma=2.0, sigma=1.0)
        gen = _gen(4)
        start = np.repeat([100.0, -100.0], 2000)
        out = np.array([advance(DriverState(xi=np.array([s]), fast_time=0.0),
                                model, 50.0, gen).xi[0] for s in start])
        assert out.var() == pytest.approx(1.0, rel=0.1)
        assert abs(np.corrcoef(start, out)[0, 1]) < 0.05

    def test_semigroup_moments(self):
        # one advance over s+s' matches two advances over s then s' in law
        model = NoiseModel.scalar_ou(1, gamma=1.5, sigma=0.8)
        gen = _gen(5)
        n = 6000
        one, two = np.empty(n), np.empty(n)
        x0 = np.empty(n)
        for i in range(n):
            st = init_stationary(model, 10_000 + i)
            x0[i] = st.xi[0]
            one[i] = advance(st, model, 0.5, gen).xi[0]
            two[i] = advance(advance(st, model, 0.2, gen), model, 0.3, gen).xi[0]
        for path in (one, two):
            assert path.var() == pytest.approx(0.64, rel=0.08)
            corr = np.corrcoef(x0, path)[0, 1]
            assert corr == pytest.approx(math.exp(-1.5 * 0.5), abs=0.04)

    def test_stationarity_along_path(self):
        # neither marginal variance nor lag correlation drifts with the
        # fast-time offset of the window
        model = NoiseModel.scalar_ou(1, gamma=1.0, sigma=1.0)
        lag = 0.5
        vals = {0.0: [], 5.0: [], 20.0: []}
        lagged = {0.0: [], 5.0: [], 20.0: []}
        for i in range(2000):
            gen = _rng.stream(i, _rng.DIRECT, 8)
            st = init_stationary(model, gen)
            t = 0.0
            for target in sorted(vals):
                st = advance(st, model, target - t, gen)
                t = target
                vals[target].append(st.xi[0])
                lagged[target].append(advance(st, model, lag, gen).xi[0])
        for target in vals:
            assert np.var(vals[target]) == pytest.approx(1.0, rel=0.1)
            corr = np.corrcoef(vals[target], lagged[target])[0, 1]
            assert corr == pytest.approx(math.exp(-lag), abs=0.06)


class TestEvalField:
    def test_scalar_ou_ignores_position(self):
        model = NoiseModel.scalar_ou(2, gamma=1.0, sigma=1.0)
        st = init_stationary(model, 2)
        a = eval_field(model, st, [0.0, 0.0])
        b = eval_field(model, st, [5.0, -3.0])
        assert np.array_equal(a, b)
        assert np.array_equal(a, st.xi)

    def test_separable_constant_profile_matches_scalar(self):
        model = NoiseModel.separable(2, gamma=1.0, sigma=1.0, g_name="one")
        st = init_stationary(model, 3)
        assert eval_field(model, st, [4.0, 4.0]) == pytest.approx(st.xi)

    def test_fourier_zero_frequency(self):
        model = NoiseModel.fourier_field(1, gamma=1.0, sigma=1.0,
                                         omegas=[[0.0]], a=[1.0], b=[0.0])
        st = init_stationary(model, 4)
        for x in ([0.0], [2.0], [-7.5]):
            assert eval_field(model, st, x) == pytest.approx(st.xi[:, 0])

    def test_dimension_mismatch(self):
        model = NoiseModel.scalar_ou(2, gamma=1.0, sigma=1.0)
        with pytest.raises(UsageError):
            eval_field(model, init_stationary(model, 0), [1.0])


class TestAveragedForcing:
    def test_scalar_ou_any_measure(self):
        model = NoiseModel.scalar_ou(1, gamma=1.0, sigma=1.0)
        st = init_stationary(model, 5)
        m = EmpiricalMeasure.from_points([[0.0], [10.0], [-3.0]])
        assert np.array_equal(averaged_forcing(model, st, m), st.xi)

    def test_separable_singleton(self):
        model = NoiseModel.separable(1, gamma=1.0, sigma=1.0, g_name="cos-sum")
        st = init_stationary(model, 6)
        m = EmpiricalMeasure.point_mass([0.0])
        assert averaged_forcing(model, st, m) == pytest.approx(st.xi * 1.0)

    def test_separable_odd_symmetry(self):
        model = NoiseModel.separable(1, gamma=1.0, sigma=1.0, g_name="clip-linear")
        st = init_stationary(model, 7)
        m = EmpiricalMeasure.from_points([[-0.5], [0.5]])
        assert averaged_forcing(model, st, m) == pytest.approx([0.0], abs=1e-15)


class TestMixingMetadata:
    def test_exponential_envelope_values(self):
        meta = mixing_metadata(NoiseModel.scalar_ou(1, gamma=2.0, sigma=1.0))
        assert meta.K == pytest.approx(0.5)
        assert meta.beta == pytest.approx(2.0)
        # quadrature oracle for the envelope integral and its fourth root
        total, _ = quad(lambda s: meta.envelope(s), 0, np.inf)
        fourth, _ = quad(lambda s: meta.envelope(s) ** 0.25, 0, np.inf)
        assert total == pytest.approx(meta.K, rel=1e-8)
        assert fourth == pytest.approx(4.0 / 2.0, rel=1e-8)

    def test_zero_rate_rejected(self):
        with pytest.raises(UsageError):
            NoiseModel.scalar_ou(1, gamma=0.0, sigma=1.0)


class TestSigmaMatrix:
    def test_scalar_ou_identity(self):
        model = NoiseModel.scalar_ou(2, gamma=1.0, sigma=1.0)
        assert sigma_matrix(model) == pytest.approx(np.eye(2))

    def test_separable_constant_reduces_to_scalar(self):
        model = NoiseModel.separable(2, gamma=1.0, sigma=1.5, g_name="one")
        m = EmpiricalMeasure.from_points(np.random.default_rng(0).standard_normal((6, 2)))
        assert sigma_matrix(model, m) == pytest.approx(1.5**2 * np.eye(2))

    def test_separable_vanishing_mean(self):
        model = NoiseModel.separable(1, gamma=1.0, sigma=1.0, g_name="clip-linear")
        m = EmpiricalMeasure.from_points([[-0.5], [0.5]])
        assert sigma_matrix(model, m) == pytest.approx(np.zeros((1, 1)), abs=1e-15)

    def test_measure_required_for_law_dependent_kinds(self):
        model = NoiseModel.separable(1, gamma=1.0, sigma=1.0, g_name="one")
        with pytest.raises(UsageError):
            sigma_matrix(model)

    def test_fourier_monte_carlo_close_to_closed_form(self):
        omegas, a, b = [[1.0], [2.0]], [0.5, 0.2], [0.1, 0.0]
        model = NoiseModel.fourier_field(1, gamma=1.0, sigma=1.0,
                                         omegas=omegas, a=a, b=b)
        m = EmpiricalMeasure.from_points([[0.3], [-1.2], [0.8]])
        pts = m.points
        ck = [np.mean(a[k] * np.cos(pts @ np.array(omegas[k]))
                      + b[k] * np.sin(pts @ np.array(omegas[k])))
              for k in range(2)]
        expected = sum(c * c for c in ck)
        est = sigma_matrix(model, m, mc_samples=200_000, seed=1)[0, 0]
        assert est == pytest.approx(expected, rel=0.05)


class TestFieldBounds:
    def test_analytic_envelopes_dominate_samples(self):
        # H3-style probe: realized field/derivative magnitudes stay under the
        # analytic per-unit scales times the realized driver magnitude.
        rng = np.random.default_rng(11)
        models = [
            NoiseModel.scalar_ou(2, gamma=1.0, sigma=1.0),
            NoiseModel.separable(2, gamma=1.0, sigma=1.0, g_name="gauss"),
            NoiseModel.fourier_field(2, gamma=1.0, sigma=1.0,
                                     omegas=[[1.0, 0.0], [0.0, 2.0]],
                                     a=[0.5, 0.3], b=[0.2, 0.1]),
        ]
        for model in models:
            scales = model.field_scales()
            st = init_stationary(model, 13)
            xi_mag = float(np.max(np.abs(st.xi)))
            n_modes = st.xi.size
            dx = 1e-5
            for _ in range(50):
                x = rng.standard_normal(2)
                f = eval_field(model, st, x)
                assert np.linalg.norm(f, np.inf) <= scales["field"] * xi_mag * n_modes + 1e-12
                g = (eval_field(model, st, x + [dx, 0.0]) - f) / dx
                assert np.linalg.norm(g, np.inf) <= scales["dx"] * xi_mag * n_modes + 1e-6

    def test_clipped_driver_hard_bound(self):
        model = NoiseModel.scalar_ou(1, gamma=1.0, sigma=1.0, clip=True)
        gen = _gen(17)
        st = init_stationary(model, 17)
        for _ in range(500):
            st = advance(st, model, 0.5, gen)
            assert abs(st.xi[0]) <= 6.0
