"""Empirical copula processes, their Stute linearization and sup-norm remainders.

Notation on a grid point ``u``:

* ``C_n``, ``C_n^nu``: empirical and smooth empirical copulas,
* ``emp(u) = sqrt(n) {C_n(u) - C(u)}`` and ``emp_nu(u) = sqrt(n) {C_n^nu(u) - C(u)}``,
* ``lin(u) = alpha_n(u) - sum_j Cdot_j(u) alpha_{n,j}(u_j)``, the linearization,
* ``lin_nu(u)``: ``lin`` averaged against the smoothing law at ``u``.

The smooth remainder splits exactly as

    emp_nu - lin = sqrt(n) {int C dnu_u - C(u)}        (bias)
                 + int (emp - lin) dnu_u               (smoothed classic remainder)
                 + (lin_nu - lin)                      (drift)

so the sup of the left-hand side never exceeds the sum of the three sups.

:class:`GridEvaluator` computes all of these on a tensor grid.  Integrals of
the smooth parts (``C`` and ``Cdot_j`` in the coordinates other than ``j``)
use Gauss quadrature for the binomial law; integrals of the step functions
``C_n``, ``G_n`` and ``alpha_{n,j}`` are exact sums over the binomial support.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._validation import check_no_ties, check_points, check_sample
from .copulas import CopulaModel
from .empirical import (EvaluationGrid, compute_ranks, empirical_process_alpha,
                        marginal_process_alpha_j)
from .smoothing import BinomialKernel, SmoothingScheme, rank_thresholds

__all__ = [
    "DecompositionError",
    "DecompositionTerms",
    "ProcessFields",
    "GridEvaluator",
    "tilde_process_eval",
    "stute_remainder_classic",
    "stute_remainder_smooth",
    "decomposition_terms",
    "check_decomposition",
]

EXACT_TOL = 1e-10


class DecompositionError(ArithmeticError):
    """The triangle inequality of the remainder decomposition failed."""


@dataclass(frozen=True)
class DecompositionTerms:
    """Sup-norm summaries of the three-term split of the smooth remainder.

    Attributes
    ----------
    lhs : float
        ``sup |emp_nu - lin|``, the smooth remainder.
    bias_term : float
        ``sup sqrt(n) |int C dnu_u - C(u)|``.
    classic_term : float
        ``sup |emp - lin|``, the remainder of the unsmoothed process.
    smooth_drift_term : float
        ``sup |lin_nu - lin|``.
    smoothed_classic_term : float
        ``sup |int (emp - lin) dnu_u|``; bounded by ``classic_term`` over the
        whole cube.
    mc_slack : float
        Allowance for Monte Carlo error; zero because every path is exact.
    """

    lhs: float
    bias_term: float
    classic_term: float
    smooth_drift_term: float
    smoothed_classic_term: float
    mc_slack: float = 0.0

    @property
    def exact(self) -> bool:
        return self.mc_slack == 0.0

    def tolerance(self) -> float:
        return EXACT_TOL if self.exact else 5.0 * self.mc_slack

    def exact_split_holds(self) -> bool:
        bound = self.bias_term + self.smoothed_classic_term + self.smooth_drift_term
        return self.lhs <= bound + self.tolerance()

    def classic_bound_holds(self) -> bool:
        bound = self.bias_term + self.classic_term + self.smooth_drift_term
        return self.lhs <= bound + self.tolerance()


@dataclass
class ProcessFields:
    """Process values on every point of a tensor grid (arrays of the grid shape)."""

    emp: np.ndarray
    lin: np.ndarray
    emp_nu: np.ndarray | None = None
    lin_nu: np.ndarray | None = None
    bias: np.ndarray | None = None

    @property
    def classic(self):
        return self.emp - self.lin

    @property
    def smooth(self):
        return self.emp_nu - self.lin

    @property
    def drift(self):
        return self.lin_nu - self.lin

    @property
    def smoothed_classic(self):
        return self.emp_nu - self.bias - self.lin_nu


def _ecdf_on_grid(values, axes):
    """Empirical d.f. of the rows of ``values`` at every tensor-grid point."""
    n, d = values.shape
    bins = [np.searchsorted(axes[j], values[:, j], side="left") for j in range(d)]
    hist = np.zeros(tuple(a.size + 1 for a in axes))
    np.add.at(hist, tuple(bins), 1.0)
    for j in range(d):
        np.cumsum(hist, axis=j, out=hist)
    return hist[tuple(slice(0, a.size) for a in axes)] / n


def _outer_mean(factors):
    """``(1/n) sum_i prod_j F_j[a_j, i]`` for factors of shape ``(A_j, n)``."""
    n = factors[0].shape[1]
    if len(factors) == 2:
        return factors[0] @ factors[1].T / n
    letters = string.ascii_lowercase
    subs = ",".join(f"{letters[j]}z" for j in range(len(factors)))
    return np.einsum(f"{subs}->{letters[:len(factors)]}", *factors, optimize=True) / n


def _quad_field(func, coords, weights, max_block=4_000_000):
    """``sum_q prod_j w_j[a_j, q_j] func(x_1[a_1, q_1], ..., x_d[a_d, q_d])``.

    ``coords[j]`` and ``weights[j]`` have shape ``(A_j, K_j)``; the result has
    shape ``(A_1, ..., A_d)``.
    """
    d = len(coords)
    shape = tuple(c.shape[0] for c in coords)
    ks = [c.shape[1] for c in coords]
    out = np.empty(shape)
    rest = int(np.prod([c.size for c in coords[1:]]))
    block = max(1, max_block // max(rest * ks[0], 1))
    letters = string.ascii_lowercase
    a_sub = letters[:d]
    q_sub = letters[d:2 * d]
    pattern = "".join(a + q for a, q in zip(a_sub, q_sub))
    w_subs = ",".join(a + q for a, q in zip(a_sub, q_sub))
    spec = f"{pattern},{w_subs}->{a_sub}"
    flat = [c.ravel() for c in coords[1:]]
    for start in range(0, shape[0], block):
        first = coords[0][start:start + block].ravel()
        mesh = np.stack(np.meshgrid(first, *flat, indexing="ij"), axis=-1)
        vals = func(mesh).reshape(
            (min(block, shape[0] - start), ks[0]) + sum(((s, k) for s, k in zip(shape[1:], ks[1:])), ()))
        w0 = weights[0][start:start + block]
        out[start:start + block] = np.einsum(spec, vals, w0, *weights[1:], optimize=True)
    return out


def _partial_nodes(support, m, spacing, ratio=0.01):
    """Subset of ``support`` where the averaged partials are computed exactly.

    Partial derivatives vary on the scale of the distance to the boundary, so
    consecutive nodes are at most ``ratio`` times that distance apart, and
    never more than ``spacing`` apart on the ``[0, 1]`` scale.
    """
    if spacing is None or spacing * m < 2:
        return support
    cap = int(spacing * m)
    nodes = [0]
    s = 0
    while s < m:
        s += max(1, min(cap, int(ratio * min(s, m - s))))
        nodes.append(min(s, m))
    nodes = np.asarray(nodes)
    # only nodes bracketing the support are needed
    lo = max(np.searchsorted(nodes, support[0], side="right") - 2, 0)
    hi = np.searchsorted(nodes, support[-1], side="left") + 2
    keep = np.union1d(nodes[lo:hi], support[[0, -1]])
    return keep[(keep >= support[0]) & (keep <= support[-1])]


@dataclass
class _SmoothPlan:
    degrees: tuple
    kernels: list
    rank_tails: list
    qc: np.ndarray
    support: list
    window_rows: list
    partial_avg: list


class GridEvaluator:
    """Evaluate every process of interest on a tensor grid for samples of size ``n``.

    Everything that depends only on the model, the smoothing scheme and the
    grid is computed once at construction, so repeated calls to
    :meth:`evaluate` with fresh samples are cheap.  Data-adaptive schemes are
    prepared per sample.

    Parameters
    ----------
    model : CopulaModel
    scheme : SmoothingScheme or None
        ``None`` restricts the evaluation to the unsmoothed processes.
    grid : EvaluationGrid
    n : int
        Sample size.
    quad_nodes : int
        Gauss nodes per coordinate for integrals of smooth functions.
    partial_spacing : float or None
        When ``m_j * partial_spacing >= 2``, averaged partial derivatives are
        computed on a graded subset of the binomial support, at most
        ``partial_spacing`` apart and denser towards 0 and 1, and interpolated
        by a cubic spline in between.  ``None`` always computes
        them at every support point.
    """

    def __init__(self, model: CopulaModel, scheme: SmoothingScheme | None,
                 grid: EvaluationGrid, n: int, quad_nodes: int = 16,
                 partial_spacing: float | None = 2e-4):
        if grid.d != model.d:
            raise ValueError(f"grid dimension {grid.d} does not match the model dimension {model.d}")
        self.model = model
        self.scheme = scheme
        self.grid = grid
        self.n = int(n)
        self.quad_nodes = int(quad_nodes)
        self.partial_spacing = partial_spacing
        mesh = grid.mesh()
        self.C = model.cdf(mesh)
        self.Cdot = [model.partial(j, mesh) for j in range(model.d)]
        self._plan = None
        if scheme is not None and not scheme.data_adaptive:
            self._plan = self._prepare(scheme.degrees(self.n, model.d))

    def _prepare(self, degrees) -> _SmoothPlan:
        axes = self.grid.axes
        d = len(axes)
        n = self.n
        kernels = [BinomialKernel(degrees[j], axes[j]) for j in range(d)]
        all_ranks = np.arange(1, n + 1)
        rank_tails = [kernels[j].tail(rank_thresholds(all_ranks, degrees[j], n)) for j in range(d)]
        gauss = [k.gauss(self.quad_nodes) for k in kernels]
        qc = _quad_field(self.model.cdf, [g[0] for g in gauss], [g[1] for g in gauss])

        support, window_rows, partial_avg = [], [], []
        for j in range(d):
            kern = kernels[j]
            s_all = np.unique(np.concatenate(
                [np.arange(lo, hi + 1) for lo, hi in zip(kern.lo, kern.hi)]))
            positions = kern.lo[:, None] + np.arange(kern.width)[None, :]
            rows = np.clip(np.searchsorted(s_all, positions), 0, s_all.size - 1)
            coords = [g[0] for g in gauss]
            weights = [g[1] for g in gauss]
            nodes = _partial_nodes(s_all, degrees[j], self.partial_spacing)
            coords[j] = (nodes / degrees[j])[:, None]
            weights[j] = np.ones((nodes.size, 1))
            avg = _quad_field(lambda pts, j=j: self.model.partial(j, pts), coords, weights)
            if nodes.size < s_all.size:
                avg = CubicSpline(nodes / degrees[j], avg, axis=j)(s_all / degrees[j])
            support.append(s_all)
            window_rows.append(rows)
            partial_avg.append(np.moveaxis(avg, j, 0).reshape(s_all.size, -1))
        return _SmoothPlan(tuple(degrees), kernels, rank_tails, qc, support, window_rows, partial_avg)

    def evaluate(self, sample) -> ProcessFields:
        """Process values on the grid for one sample of size ``n``."""
        U = check_sample(sample)
        n, d = U.shape
        if n != self.n or d != self.model.d:
            raise ValueError(f"expected a sample of shape ({self.n}, {self.model.d}), got {U.shape}")
        check_no_ties(U)
        R = compute_ranks(U).ranks
        axes = self.grid.axes
        rn = np.sqrt(n)
        sorted_cols = [np.sort(U[:, j]) for j in range(d)]

        cn = _ecdf_on_grid(R / n, axes)
        gn = _ecdf_on_grid(U, axes)
        lin = rn * (gn - self.C)
        for j in range(d):
            alpha_j = rn * (np.searchsorted(sorted_cols[j], axes[j], side="right") / n - axes[j])
            shape = [1] * d
            shape[j] = -1
            lin = lin - self.Cdot[j] * alpha_j.reshape(shape)
        fields = ProcessFields(emp=rn * (cn - self.C), lin=lin)
        if self.scheme is None:
            return fields

        plan = self._plan
        if plan is None:
            plan = self._prepare(self.scheme.degrees(n, d, U))
        cnu = _outer_mean([plan.rank_tails[j][:, R[:, j] - 1] for j in range(d)])
        data_tails = [plan.kernels[j].tail(np.ceil(plan.degrees[j] * U[:, j]).astype(np.int64))
                      for j in range(d)]
        gnu = _outer_mean(data_tails)
        lin_nu = rn * (gnu - plan.qc)
        for j in range(d):
            kern = plan.kernels[j]
            s = plan.support[j]
            grid_pts = s / plan.degrees[j]
            alpha_s = rn * (np.searchsorted(sorted_cols[j], grid_pts, side="right") / n - grid_pts)
            rows = plan.window_rows[j]
            weighted = kern.pmf * alpha_s[rows]
            h = plan.partial_avg[j]
            term = np.empty((kern.u.size, h.shape[1]))
            for k in range(kern.u.size):
                term[k] = weighted[k] @ h[rows[k]]
            rest_shape = tuple(a.size for i, a in enumerate(axes) if i != j)
            term = np.moveaxis(term.reshape((kern.u.size,) + rest_shape), 0, j)
            lin_nu = lin_nu - term
        fields.emp_nu = rn * (cnu - self.C)
        fields.lin_nu = lin_nu
        fields.bias = rn * (plan.qc - self.C)
        return fields

    def terms(self, sample) -> DecompositionTerms:
        f = self.evaluate(sample)
        sup = self.grid.sup
        return DecompositionTerms(
            lhs=sup(f.smooth),
            bias_term=sup(f.bias),
            classic_term=sup(f.classic),
            smooth_drift_term=sup(f.drift),
            smoothed_classic_term=sup(f.smoothed_classic),
        )


def tilde_process_eval(sample, model: CopulaModel, u):
    """Linearized process ``alpha_n(u) - sum_j Cdot_j(u) alpha_{n,j}(u_j)`` at point(s) ``u``."""
    X = check_sample(sample)
    u = check_points(u, X.shape[1])
    out = np.asarray(empirical_process_alpha(X, model, u), dtype=float)
    for j in range(X.shape[1]):
        out = out - np.asarray(model.partial(j, u)) * marginal_process_alpha_j(X, j, u[..., j])
    return float(out) if out.ndim == 0 else out


def stute_remainder_classic(sample, model: CopulaModel, grid: EvaluationGrid) -> float:
    """``max`` over the grid of ``|sqrt(n){C_n - C} - lin|``."""
    X = check_sample(sample)
    fields = GridEvaluator(model, None, grid, X.shape[0]).evaluate(X)
    return grid.sup(fields.classic)


def stute_remainder_smooth(sample, model: CopulaModel, scheme: SmoothingScheme,
                           grid: EvaluationGrid) -> float:
    """``max`` over the grid of ``|sqrt(n){C_n^nu - C} - lin|``."""
    X = check_sample(sample)
    fields = GridEvaluator(model, scheme, grid, X.shape[0]).evaluate(X)
    return grid.sup(fields.smooth)


def decomposition_terms(sample, model: CopulaModel, scheme: SmoothingScheme,
                        grid: EvaluationGrid, quad_nodes: int = 16) -> DecompositionTerms:
    """Sup-norm terms of the remainder decomposition on ``grid``.

    Raises
    ------
    DecompositionError
        If the smooth remainder exceeds the sum of bias, classic remainder and
        drift by more than the tolerance, or the sum with the smoothed classic
        remainder in place of the classic one.
    """
    X = check_sample(sample)
    terms = GridEvaluator(model, scheme, grid, X.shape[0], quad_nodes=quad_nodes).terms(X)
    check_decomposition(terms)
    return terms


def check_decomposition(terms: DecompositionTerms) -> None:
    """Raise :class:`DecompositionError` unless both triangle bounds hold."""
    if not terms.classic_bound_holds():
        raise DecompositionError(
            f"smooth remainder {terms.lhs!r} exceeds bias + classic + drift = "
            f"{terms.bias_term + terms.classic_term + terms.smooth_drift_term!r}")
    if not terms.exact_split_holds():
        raise DecompositionError(
            f"smooth remainder {terms.lhs!r} exceeds bias + smoothed classic + drift = "
            f"{terms.bias_term + terms.smoothed_classic_term + terms.smooth_drift_term!r}")
