import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import kendalltau, kstest

from smoothcopula.copulas import (ClaytonCopula, FrankCopula, GumbelCopula, IndependenceCopula,
                                  condition2_scan, copula_cdf, copula_partial, copula_sample,
                                  make_copula)

FAMILIES = [IndependenceCopula(), ClaytonCopula(2.0), GumbelCopula(1.7), FrankCopula(-3.0),
            FrankCopula(5.0), ClaytonCopula(0.3, d=3)]


def mp_clayton(u, theta):
    return _hp(_mp_clayton, u, theta)


def mp_gumbel(u, theta):
    return _hp(_mp_gumbel, u, theta)


def mp_frank(u, theta):
    return _hp(_mp_frank, u, theta)


def _hp(func, u, theta):
    # mpmath defaults to 15 digits, no better than float; the references need headroom
    with mpmath.workdps(50):
        return +func(u, theta)


def _mp_clayton(u, theta):
    s = sum(mpmath.mpf(x) ** -theta for x in u) - (len(u) - 1)
    return s ** (-1 / mpmath.mpf(theta))


def _mp_gumbel(u, theta):
    s = sum((-mpmath.log(mpmath.mpf(x))) ** theta for x in u)
    return mpmath.exp(-s ** (1 / mpmath.mpf(theta)))


def _mp_frank(u, theta):
    th = mpmath.mpf(theta)
    num = mpmath.expm1(-th * u[0]) * mpmath.expm1(-th * u[1])
    return -mpmath.log(1 + num / mpmath.expm1(-th)) / th


class TestCdf:
    def test_independence(self):
        assert copula_cdf(IndependenceCopula(), [0.3, 0.7]) == pytest.approx(0.21, abs=1e-15)

    def test_clayton_value(self):
        assert copula_cdf(ClaytonCopula(2.0), [0.5, 0.5]) == pytest.approx(7 ** -0.5, abs=1e-15)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_uniform_margins(self, model):
        u = np.linspace(0, 1, 17)
        for j in range(model.d):
            pts = np.ones((u.size, model.d))
            pts[:, j] = u
            np.testing.assert_array_equal(model.cdf(pts), u)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_zero_coordinate(self, model):
        pts = np.full((5, model.d), 0.4)
        pts[:, -1] = 0.0
        assert np.all(model.cdf(pts) == 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-6, 1 - 1e-9), st.floats(1e-6, 1 - 1e-9), st.floats(0.05, 20))
    def test_clayton_mpmath(self, a, b, theta):
        ref = float(mp_clayton([a, b], theta))
        assert ClaytonCopula(theta).cdf([a, b]) == pytest.approx(ref, rel=1e-12, abs=1e-300)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-6, 1 - 1e-9), st.floats(1e-6, 1 - 1e-9), st.floats(1.0, 15))
    def test_gumbel_mpmath(self, a, b, theta):
        ref = float(mp_gumbel([a, b], theta))
        assert GumbelCopula(theta).cdf([a, b]) == pytest.approx(ref, rel=1e-11, abs=1e-300)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-6, 1 - 1e-9), st.floats(1e-6, 1 - 1e-9),
           st.floats(-30, 30).filter(lambda t: abs(t) > 1e-3))
    def test_frank_mpmath(self, a, b, theta):
        ref = float(mp_frank([a, b], theta))
        assert FrankCopula(theta).cdf([a, b]) == pytest.approx(ref, rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("a, b, theta", [(0.875, 0.96875, 22.0), (0.99, 0.999, 30.0), (0.5, 0.97, 25.0)])
    def test_frank_strong_dependence(self, a, b, theta):
        # near the upper corner with large theta, log1p of an argument close to -1 loses digits
        ref = float(mp_frank([a, b], theta))
        assert FrankCopula(theta).cdf([a, b]) == pytest.approx(ref, rel=1e-14)
        for j in range(2):
            with mpmath.workdps(50):
                args = [mpmath.mpf(a), mpmath.mpf(b)]
                dref = float(mpmath.diff(lambda z: _mp_frank(args[:j] + [z] + args[j + 1:], theta), args[j]))
            assert FrankCopula(theta).partial(j, [a, b]) == pytest.approx(dref, rel=1e-12)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_frechet_bounds(self, model):
        rng = np.random.default_rng(0)
        u = rng.random((500, model.d))
        c = model.cdf(u)
        assert np.all(c <= u.min(axis=1) + 1e-15)
        assert np.all(c >= np.maximum(u.sum(axis=1) - model.d + 1, 0) - 1e-15)


class TestPartial:
    def test_independence(self):
        assert copula_partial(IndependenceCopula(), 0, [0.4, 0.6]) == pytest.approx(0.6)

    def test_clayton_value(self):
        assert copula_partial(ClaytonCopula(2.0), 0, [0.5, 0.5]) == pytest.approx(8 * 7 ** -1.5, abs=1e-15)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_boundary_convention(self, model):
        pt = np.full(model.d, 0.5)
        pt[0] = 0.0
        assert model.partial(0, pt) == 0.0
        pt[0] = 1.0
        assert model.partial(0, pt) == 0.0

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_mpmath_derivative(self, model):
        rng = np.random.default_rng(1)
        exact = {ClaytonCopula: _mp_clayton, GumbelCopula: _mp_gumbel, FrankCopula: _mp_frank}
        if type(model) not in exact or model.d != 2:
            pytest.skip("no mpmath closed form")
        for u in rng.uniform(0.02, 0.98, size=(10, 2)):
            for j in range(2):
                f = lambda x: exact[type(model)]([x if i == j else u[i] for i in range(2)], model.theta)
                with mpmath.workdps(50):
                    ref = float(mpmath.diff(f, mpmath.mpf(u[j])))
                assert model.partial(j, u) == pytest.approx(ref, rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_range(self, model):
        u = np.random.default_rng(2).random((1000, model.d))
        for j in range(model.d):
            p = model.partial(j, u)
            assert np.all((p >= 0) & (p <= 1))


def frank_tau(theta):
    debye, _ = quad(lambda t: t / np.expm1(t), 0, theta)
    return 1 - 4 / theta * (1 - debye / theta)


class TestSample:
    def test_independence_margins(self):
        X = copula_sample(IndependenceCopula(), 100_000, seed=3)
        for j in range(2):
            assert kstest(X[:, j], "uniform").statistic < 1.95 / np.sqrt(X.shape[0])

    @pytest.mark.parametrize("model,tau", [
        (ClaytonCopula(2.0), 0.5),
        (GumbelCopula(2.0), 0.5),
        (FrankCopula(5.0), frank_tau(5.0)),
    ], ids=repr)
    def test_kendall_tau(self, model, tau):
        X = model.sample(100_000, 4)
        assert kendalltau(X[:, 0], X[:, 1]).statistic == pytest.approx(tau, abs=0.01)

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_margins_uniform(self, model):
        X = model.sample(20_000, 5)
        for j in range(model.d):
            assert kstest(X[:, j], "uniform").pvalue > 1e-4

    @pytest.mark.parametrize("model", FAMILIES, ids=repr)
    def test_determinism(self, model):
        np.testing.assert_array_equal(model.sample(50, 11), model.sample(50, 11))

    def test_values_in_unit_cube(self):
        X = ClaytonCopula(8.0).sample(10_000, 6)
        assert np.all((X >= 0) & (X <= 1))


class TestFactory:
    def test_make(self):
        assert make_copula("Clayton", 2.0) == ClaytonCopula(2.0)
        assert make_copula("independence", d=3).d == 3

    @pytest.mark.parametrize("args", [("student", 1.0), ("clayton", None), ("clayton", -1.0),
                                      ("gumbel", 0.5), ("frank", 0.0)])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            make_copula(*args)

    def test_bivariate_only_families(self):
        with pytest.raises(ValueError):
            GumbelCopula(2.0, d=3)


class TestCondition2:
    def test_independence(self):
        rep = condition2_scan(IndependenceCopula())
        grid = np.linspace(0.01, 0.99, 33)
        expected = np.max(grid * (1 - grid))
        assert rep.max_ratio == pytest.approx(expected, abs=1e-6)
        # finite differences of u1*u2 are exact up to rounding of order 1e-9
        assert rep.max_ratio <= 0.25 + 1e-8

    def test_clayton_stable(self):
        rep = condition2_scan(ClaytonCopula(2.0))
        assert np.isfinite(rep.max_ratio)
        lv = np.array(rep.level_max)
        assert lv.max() <= 2 * lv.min()
        assert not rep.unstable

    @pytest.mark.parametrize("levels", [(1, 9, 17), (9, 17)])
    def test_degenerate_grid(self, levels):
        with pytest.raises(ValueError):
            condition2_scan(ClaytonCopula(2.0), levels=levels)

    def test_csv(self, tmp_path):
        rep = condition2_scan(FrankCopula(3.0))
        rep.to_csv(tmp_path / "c2.csv")
        lines = (tmp_path / "c2.csv").read_text().splitlines()
        assert lines[0] == "level,points_per_axis,i,j,max_ratio,unstable_points"
        assert len(lines) == 1 + len(rep.rows)
