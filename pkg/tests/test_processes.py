import numpy as np
import pytest
from scipy.stats import binom

from smoothcopula.copulas import ClaytonCopula, FrankCopula, GumbelCopula, IndependenceCopula
from smoothcopula.empirical import EvaluationGrid, compute_ranks, empirical_copula
from smoothcopula.processes import (DecompositionError, DecompositionTerms, GridEvaluator,
                                    check_decomposition, decomposition_terms,
                                    stute_remainder_classic, stute_remainder_smooth,
                                    tilde_process_eval)
from smoothcopula.smoothing import SmoothingScheme, smooth_copula_closed


def brute_smoothed(func, axes, degrees):
    """sum_s prod_j pmf_j(s_j; u_j) func(s / m) on a 2-d tensor grid, by full support sums."""
    m1, m2 = degrees
    s1, s2 = np.arange(m1 + 1), np.arange(m2 + 1)
    pts = np.stack(np.meshgrid(s1 / m1, s2 / m2, indexing="ij"), axis=-1)
    vals = func(pts)
    P1 = binom.pmf(s1[None, :], m1, axes[0][:, None])
    P2 = binom.pmf(s2[None, :], m2, axes[1][:, None])
    return P1 @ vals @ P2.T


class TestTilde:
    def test_hand_computation(self):
        assert tilde_process_eval([[0.5, 0.5]], IndependenceCopula(), [0.6, 0.6]) == pytest.approx(0.16)

    def test_boundary(self):
        X = ClaytonCopula(2.0).sample(30, 0)
        model = ClaytonCopula(2.0)
        assert tilde_process_eval(X, model, [1.0, 1.0]) == 0.0
        assert tilde_process_eval(X, model, [0.0, 0.7]) == 0.0
        assert tilde_process_eval(X, model, [0.4, 0.0]) == 0.0


class TestClassic:
    def test_corners(self):
        X = ClaytonCopula(2.0).sample(50, 1)
        assert stute_remainder_classic(X, ClaytonCopula(2.0), EvaluationGrid.corners(2)) == 0.0

    def test_hand_computation(self):
        # n = 1: the only rank vector is (1, 1), so C_1(0.6, 0.6) = 1(1 <= 0.6) = 0 and
        # |sqrt(1)(0 - 0.36) - 0.16| = 0.52.  Using G_1(0.6, 0.6) = 1 instead gives 0.48.
        grid = EvaluationGrid.from_points([[0.6, 0.6]])
        assert stute_remainder_classic([[0.5, 0.5]], IndependenceCopula(), grid) == pytest.approx(0.52, abs=1e-15)
        alpha = 1.0 - 0.36
        assert abs(alpha - tilde_process_eval([[0.5, 0.5]], IndependenceCopula(), [0.6, 0.6])) == pytest.approx(0.48)

    def test_matches_pointwise(self):
        model = GumbelCopula(1.5)
        X = model.sample(40, 2)
        grid = EvaluationGrid.build(2, 40, resolution=13)
        pts = grid.mesh()
        direct = np.sqrt(40) * (empirical_copula(compute_ranks(X), pts) - model.cdf(pts)) - tilde_process_eval(X, model, pts)
        assert stute_remainder_classic(X, model, grid) == pytest.approx(np.abs(direct).max(), abs=1e-13)


class TestSmooth:
    def test_corners(self):
        X = ClaytonCopula(2.0).sample(50, 3)
        assert stute_remainder_smooth(X, ClaytonCopula(2.0), SmoothingScheme.beta(), EvaluationGrid.corners(2)) == 0.0

    def test_matches_pointwise(self):
        model = FrankCopula(4.0)
        X = model.sample(60, 4)
        scheme = SmoothingScheme.bernstein_rate(1.25)
        grid = EvaluationGrid.build(2, 60, resolution=11)
        pts = grid.mesh()
        direct = (np.sqrt(60) * (smooth_copula_closed(compute_ranks(X), scheme, pts) - model.cdf(pts))
                  - tilde_process_eval(X, model, pts))
        assert stute_remainder_smooth(X, model, scheme, grid) == pytest.approx(np.abs(direct).max(), abs=1e-12)

    def test_beta_comparable_to_classic(self):
        model = ClaytonCopula(2.0)
        X = model.sample(1024, 5)
        grid = EvaluationGrid.build(2, 1024, lattice=False)
        smooth = stute_remainder_smooth(X, model, SmoothingScheme.beta(), grid)
        classic = stute_remainder_classic(X, model, grid)
        assert np.isfinite(smooth)
        assert classic / 5 <= smooth <= 5 * classic


class TestEvaluatorOracles:
    @pytest.mark.parametrize("model", [ClaytonCopula(2.0), IndependenceCopula(), FrankCopula(-4.0)], ids=repr)
    @pytest.mark.parametrize("degrees", [(17, 17), (9, 30)])
    def test_fields_against_full_support_sums(self, model, degrees):
        n = 17
        X = model.sample(n, 6)
        grid = EvaluationGrid.build(2, n, resolution=9)
        scheme = SmoothingScheme.bernstein_fixed(degrees[0])
        ev = GridEvaluator(model, scheme, grid, n, quad_nodes=32)
        plan = ev._prepare(degrees)
        ev._plan = plan
        f = ev.evaluate(X)
        axes = grid.axes
        C = model.cdf(grid.mesh())
        bias = np.sqrt(n) * (brute_smoothed(model.cdf, axes, degrees) - C)
        lin_nu = brute_smoothed(lambda p: tilde_process_eval(X, model, p), axes, degrees)
        emp_nu = np.sqrt(n) * (brute_smoothed(lambda p: empirical_copula(compute_ranks(X), p), axes, degrees) - C)
        np.testing.assert_allclose(f.bias, bias, atol=1e-10)
        np.testing.assert_allclose(f.lin_nu, lin_nu, atol=1e-10)
        np.testing.assert_allclose(f.emp_nu, emp_nu, atol=1e-12)

    def test_three_dimensions(self):
        model = ClaytonCopula(1.0, d=3)
        n = 12
        X = model.sample(n, 7)
        grid = EvaluationGrid.build(3, n, resolution=5, lattice=False)
        scheme = SmoothingScheme.beta()
        f = GridEvaluator(model, scheme, grid, n).evaluate(X)
        pts = grid.mesh()
        R = compute_ranks(X)
        np.testing.assert_allclose(f.emp, np.sqrt(n) * (empirical_copula(R, pts) - model.cdf(pts)), atol=1e-13)
        np.testing.assert_allclose(f.lin, tilde_process_eval(X, model, pts), atol=1e-13)
        np.testing.assert_allclose(f.emp_nu, np.sqrt(n) * (smooth_copula_closed(R, scheme, pts) - model.cdf(pts)),
                                   atol=1e-12)

    def test_interpolated_partials(self):
        model = ClaytonCopula(2.0)
        n = 256
        X = model.sample(n, 8)
        grid = EvaluationGrid.build(2, n, resolution=21, lattice=False)
        scheme = SmoothingScheme.bernstein_rate(1.5)
        exact = GridEvaluator(model, scheme, grid, n, partial_spacing=None).evaluate(X)
        fast = GridEvaluator(model, scheme, grid, n, partial_spacing=2e-3).evaluate(X)
        np.testing.assert_allclose(fast.lin_nu, exact.lin_nu, atol=1e-8)

    def test_adaptive_scheme(self):
        model = ClaytonCopula(2.0)
        X = model.sample(40, 9)
        grid = EvaluationGrid.build(2, 40, resolution=7)
        scheme = SmoothingScheme.adaptive_bernstein(1.0)
        f = GridEvaluator(model, scheme, grid, 40).evaluate(X)
        pts = grid.mesh()
        direct = np.sqrt(40) * (smooth_copula_closed(compute_ranks(X), scheme, pts) - model.cdf(pts))
        np.testing.assert_allclose(f.emp_nu, direct, atol=1e-12)

    def test_shape_checks(self):
        model = ClaytonCopula(2.0)
        ev = GridEvaluator(model, None, EvaluationGrid.build(2, 10, resolution=5), 10)
        with pytest.raises(ValueError):
            ev.evaluate(model.sample(11, 0))
        with pytest.raises(ValueError):
            GridEvaluator(model, None, EvaluationGrid.build(3, 10, resolution=5), 10)


class TestBoundary:
    @pytest.mark.parametrize("scheme", [SmoothingScheme.beta(), SmoothingScheme.bernstein_rate(1.5),
                                        SmoothingScheme.bernstein_fixed(3)], ids=lambda s: s.describe())
    def test_all_fields_vanish(self, scheme):
        model = ClaytonCopula(2.0)
        n = 64
        grid = EvaluationGrid.build(2, n, resolution=11)
        f = GridEvaluator(model, scheme, grid, n).evaluate(model.sample(n, 10))
        for field in (f.lin, f.classic, f.smooth, f.drift, f.bias, f.smoothed_classic):
            assert np.all(field[0, :] == 0) and np.all(field[:, 0] == 0)
            assert field[-1, -1] == 0


class TestDecomposition:
    def test_independence(self):
        model = IndependenceCopula()
        for seed in range(5):
            X = model.sample(32, seed)
            t = decomposition_terms(X, model, SmoothingScheme.bernstein_fixed(7), EvaluationGrid.build(2, 32, resolution=17))
            assert t.lhs <= t.bias_term + t.classic_term + t.smooth_drift_term + 1e-10
            assert t.exact

    def test_independence_bias_vanishes(self):
        model = IndependenceCopula()
        t = decomposition_terms(model.sample(16, 0), model, SmoothingScheme.bernstein_fixed(9),
                                EvaluationGrid.build(2, 16, resolution=21))
        assert t.bias_term <= 1e-12

    def test_large_degree_bias(self):
        model = ClaytonCopula(2.0)
        grid = EvaluationGrid((np.linspace(0, 1, 21),) * 2)
        t = decomposition_terms(model.sample(8, 1), model, SmoothingScheme.bernstein_fixed(10 ** 6), grid)
        assert t.bias_term <= 1e-2

    def test_single_point_enumeration(self):
        model = ClaytonCopula(2.0)
        X = np.array([[0.3, 0.6]])
        grid = EvaluationGrid.build(2, 1, resolution=6)
        t = decomposition_terms(X, model, SmoothingScheme.beta(), grid)
        # with n = m = 1, C_n^nu(u) = u1 * u2 (both ranks equal 1)
        pts = grid.mesh()
        lhs = np.abs(pts[..., 0] * pts[..., 1] - model.cdf(pts) - tilde_process_eval(X, model, pts)).max()
        assert t.lhs == pytest.approx(lhs, abs=1e-12)
        bias = np.abs(brute_smoothed(model.cdf, grid.axes, (1, 1)) - model.cdf(pts)).max()
        assert t.bias_term == pytest.approx(bias, abs=1e-12)
        drift = np.abs(brute_smoothed(lambda p: tilde_process_eval(X, model, p), grid.axes, (1, 1))
                       - tilde_process_eval(X, model, pts)).max()
        assert t.smooth_drift_term == pytest.approx(drift, abs=1e-12)

    def test_violation_raises(self):
        bad = DecompositionTerms(lhs=1.0, bias_term=0.1, classic_term=0.2, smooth_drift_term=0.3,
                                 smoothed_classic_term=0.2)
        with pytest.raises(DecompositionError):
            check_decomposition(bad)
        check_decomposition(DecompositionTerms(lhs=0.6, bias_term=0.1, classic_term=0.2,
                                               smooth_drift_term=0.3, smoothed_classic_term=0.2))
