"""Parametric reference copulas with exact cdf, first partial derivatives and samplers.

All families evaluate on arrays of points of shape ``(..., d)``.  The first
partial derivative with respect to margin ``j`` is set to zero wherever
``u_j`` is 0 or 1, so that it is defined on the whole unit cube.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_points, check_random_state

__all__ = [
    "CopulaModel",
    "IndependenceCopula",
    "ClaytonCopula",
    "GumbelCopula",
    "FrankCopula",
    "make_copula",
    "copula_cdf",
    "copula_partial",
    "copula_sample",
    "Condition2Report",
    "condition2_scan",
]


class CopulaModel:
    """Base class for the reference copula families.

    Subclasses implement ``_cdf``, ``_partial`` and ``_sample`` for points
    strictly inside the cube; boundary handling lives here.
    """

    family = "base"

    def __init__(self, d: int = 2):
        if int(d) != d or d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {d}")
        self.d = int(d)

    theta = None

    def __repr__(self):
        if self.theta is None:
            return f"{type(self).__name__}(d={self.d})"
        return f"{type(self).__name__}(theta={self.theta!r}, d={self.d})"

    def __eq__(self, other):
        return (type(self) is type(other) and self.d == other.d
                and self.theta == other.theta)

    def __hash__(self):
        return hash((type(self).__name__, self.d, self.theta))

    def cdf(self, u):
        """Copula distribution function at point(s) ``u`` of shape ``(..., d)``."""
        u = check_points(u, self.d)
        out = np.zeros(u.shape[:-1])
        zero = np.any(u == 0.0, axis=-1)
        below_one = u < 1.0
        n_free = below_one.sum(axis=-1)
        # uniform margins: a point with a single coordinate below 1 evaluates exactly
        single = ~zero & (n_free <= 1)
        out[single] = np.min(u[single], axis=-1) if single.any() else 0.0
        inner = ~zero & ~single
        if inner.any():
            out[inner] = self._cdf(u[inner])
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def partial(self, j: int, u):
        """First partial derivative with respect to margin ``j`` (0-based).

        Zero wherever ``u_j`` is 0 or 1, and wherever any other coordinate is 0.
        """
        if not (0 <= j < self.d):
            raise ValueError(f"margin index j must lie in [0, {self.d}), got {j}")
        u = check_points(u, self.d)
        out = np.zeros(u.shape[:-1])
        uj = u[..., j]
        interior_j = (uj > 0.0) & (uj < 1.0)
        other = np.delete(u, j, axis=-1)
        zero_other = np.any(other == 0.0, axis=-1)
        ones_other = np.all(other == 1.0, axis=-1)
        active = interior_j & ~zero_other
        out[active & ones_other] = 1.0
        inner = active & ~ones_other
        if inner.any():
            out[inner] = self._partial(j, u[inner])
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, n: int, random_state=None):
        """Draw ``n`` i.i.d. observations; returns an ``(n, d)`` array."""
        if int(n) != n or n < 1:
            raise ValueError(f"sample size must be a positive integer, got {n}")
        rng = check_random_state(random_state)
        return self._sample(int(n), rng)

    def _cdf(self, u):
        raise NotImplementedError

    def _partial(self, j, u):
        raise NotImplementedError

    def _sample(self, n, rng):
        raise NotImplementedError


class IndependenceCopula(CopulaModel):
    family = "independence"

    def _cdf(self, u):
        return np.prod(u, axis=-1)

    def _partial(self, j, u):
        return np.prod(np.delete(u, j, axis=-1), axis=-1)

    def _sample(self, n, rng):
        return rng.random((n, self.d))


class ClaytonCopula(CopulaModel):
    """Clayton copula, ``(sum_j u_j^{-theta} - d + 1)^{-1/theta}``, theta > 0."""

    family = "clayton"

    def __init__(self, theta: float, d: int = 2):
        super().__init__(d)
        if not theta > 0:
            raise ValueError(f"Clayton requires theta > 0, got {theta}")
        self.theta = float(theta)

    def _log_gen_sum(self, u):
        # returns t_j = -theta * log(u_j) and L = log(sum_j u_j^{-theta} - d + 1)
        t = -self.theta * np.log(u)
        tmax = t.max(axis=-1)
        with np.errstate(over="ignore", invalid="ignore"):
            direct = np.log1p(np.sum(np.expm1(t), axis=-1))
            scaled = tmax + np.log(np.sum(np.exp(t - tmax[..., None]), axis=-1)
                                   - (self.d - 1) * np.exp(-tmax))
        return t, np.where(tmax < 700.0, direct, scaled)

    def _cdf(self, u):
        _, L = self._log_gen_sum(u)
        return np.exp(-L / self.theta)

    def _partial(self, j, u):
        t, L = self._log_gen_sum(u)
        return np.exp((1.0 + self.theta) / self.theta * (t[..., j] - L))

    def _sample(self, n, rng):
        # Marshall-Olkin frailty construction
        v = rng.gamma(1.0 / self.theta, 1.0, size=(n, 1))
        e = rng.standard_exponential((n, self.d))
        return np.exp(-np.log1p(e / v) / self.theta)


class _BivariateConditional(CopulaModel):
    """Bivariate family sampled by inverting ``v -> C_1(u, v)`` with bisection."""

    bisection_tol = 1e-12

    def __init__(self, d: int = 2):
        if d != 2:
            raise ValueError(f"{type(self).__name__} is only available for d = 2")
        super().__init__(2)

    def conditional_inverse(self, u, p):
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        lo = np.zeros(np.broadcast(u, p).shape)
        hi = np.ones_like(lo)
        n_iter = int(math.ceil(math.log2(1.0 / self.bisection_tol))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            val = self.partial(0, np.stack(np.broadcast_arrays(u, mid), axis=-1))
            go_up = val < p
            lo = np.where(go_up, mid, lo)
            hi = np.where(go_up, hi, mid)
        return 0.5 * (lo + hi)

    def _sample(self, n, rng):
        u = rng.random(n)
        p = rng.random(n)
        return np.column_stack([u, self.conditional_inverse(u, p)])


class GumbelCopula(_BivariateConditional):
    """Gumbel copula, ``exp(-((-ln u)^theta + (-ln v)^theta)^{1/theta})``, theta >= 1."""

    family = "gumbel"

    def __init__(self, theta: float, d: int = 2):
        super().__init__(d)
        if not theta >= 1:
            raise ValueError(f"Gumbel requires theta >= 1, got {theta}")
        self.theta = float(theta)

    def _cdf(self, u):
        x = -np.log(u)
        a = np.sum(x ** self.theta, axis=-1)
        return np.exp(-a ** (1.0 / self.theta))

    def _partial(self, j, u):
        th = self.theta
        x = -np.log(u)
        a = np.sum(x ** th, axis=-1)
        xj = x[..., j]
        log_val = (-a ** (1.0 / th) + (1.0 / th - 1.0) * np.log(a)
                   + (th - 1.0) * np.log(xj) + xj)
        return np.exp(log_val)


class FrankCopula(_BivariateConditional):
    """Frank copula, theta != 0."""

    family = "frank"

    def __init__(self, theta: float, d: int = 2):
        super().__init__(d)
        if theta == 0 or not np.isfinite(theta):
            raise ValueError(f"Frank requires a finite theta != 0, got {theta}")
        self.theta = float(theta)

    def _shifted_product(self, u):
        """``expm1(-th) + expm1(-th u1) expm1(-th u2)``, free of cancellation.

        Written out it is a sum of two terms with the same sign, whereas the
        direct form nearly cancels for large ``th > 0`` near the upper corner.
        """
        th = self.theta
        a, b = u[..., 0], u[..., 1]
        return np.exp(-th * a) * np.expm1(-th * (1.0 - a)) + np.exp(-th * b) * np.expm1(-th * a)

    def _cdf(self, u):
        th = self.theta
        den = np.expm1(-th)
        x = np.prod(np.expm1(-th * u), axis=-1) / den
        with np.errstate(divide="ignore"):
            # log1p is accurate while x is small; near x = -1 take the log of 1 + x built directly
            return -np.where(np.abs(x) <= 0.5, np.log1p(x), np.log(self._shifted_product(u) / den)) / th

    def _partial(self, j, u):
        th = self.theta
        other = np.expm1(-th * u[..., 1 - j])
        return np.exp(-th * u[..., j]) * other / self._shifted_product(u)


_FAMILIES = {
    "independence": IndependenceCopula,
    "clayton": ClaytonCopula,
    "gumbel": GumbelCopula,
    "frank": FrankCopula,
}


def make_copula(family: str, theta: float | None = None, d: int = 2) -> CopulaModel:
    """Build a reference copula from its family name."""
    try:
        cls = _FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(f"unknown copula family {family!r}; "
                         f"choose from {sorted(_FAMILIES)}") from None
    if cls is IndependenceCopula:
        return cls(d=d)
    if theta is None:
        raise ValueError(f"family {family!r} requires a parameter theta")
    return cls(theta, d=d)


def copula_cdf(model: CopulaModel, u):
    return model.cdf(u)


def copula_partial(model: CopulaModel, j: int, u):
    return model.partial(j, u)


def copula_sample(model: CopulaModel, n: int, seed=None):
    return model.sample(n, seed)


@dataclass
class Condition2Report:
    """Finite-difference scan of weighted second-order partial derivatives.

    ``max_ratio`` is the largest value of
    ``|d^2 C / du_i du_j| * min(u_i (1 - u_i), u_j (1 - u_j))`` seen on the
    finest grid.  The report is a diagnostic, never a pass/fail verdict.
    """

    grid_spec: dict
    max_ratio: float
    pair_max: dict
    level_max: list
    stability: float
    unstable: bool
    unstable_count: int
    rows: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "points_per_axis", "i", "j", "max_ratio", "unstable_points"])
            for row in self.rows:
                writer.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.17g}", row[5]])


def _second_difference(model, pts, i, j, h):
    if i == j:
        e = np.zeros(model.d)
        e[i] = h
        return (model.cdf(pts + e) - 2.0 * model.cdf(pts) + model.cdf(pts - e)) / h ** 2
    ei = np.zeros(model.d)
    ej = np.zeros(model.d)
    ei[i] = h
    ej[j] = h
    return (model.cdf(pts + ei + ej) - model.cdf(pts + ei - ej)
            - model.cdf(pts - ei + ej) + model.cdf(pts - ei - ej)) / (4.0 * h ** 2)


def condition2_scan(model: CopulaModel, lo: float = 0.01, hi: float = 0.99,
                    levels=(9, 17, 33), h: float = 1e-4,
                    rel_disagreement: float = 0.10, abs_floor: float = 1e-5) -> Condition2Report:
    """Scan ``|C_ij(u)| min(u_i(1-u_i), u_j(1-u_j))`` on nested interior grids.

    Parameters
    ----------
    model : CopulaModel
    lo, hi : float
        Grid bounds; must satisfy ``h < lo < hi < 1 - h``.
    levels : sequence of int
        Points per axis at each refinement level; at least three levels.
    h : float
        Finite-difference step.  Each derivative is also computed with
        ``h / 2``; points where the two disagree by more than
        ``rel_disagreement`` (and by more than ``abs_floor`` in absolute
        terms, the round-off floor of the stencil) are flagged.
    """
    levels = [int(k) for k in levels]
    if len(levels) < 3 or min(levels) < 2:
        raise ValueError("condition2_scan needs at least 3 refinement levels of >= 2 points")
    if not (h < lo < hi < 1.0 - h):
        raise ValueError(f"grid [{lo}, {hi}] must lie strictly inside (0, 1) with margin h={h}")

    pairs = [(i, j) for i in range(model.d) for j in range(i, model.d)]
    rows, level_max = [], []
    pair_max = {}
    unstable_count = 0
    for k in levels:
        axis = np.linspace(lo, hi, k)
        pts = np.array(list(itertools.product(axis, repeat=model.d)))
        w = pts * (1.0 - pts)
        best = 0.0
        for i, j in pairs:
            d_h = _second_difference(model, pts, i, j, h)
            d_h2 = _second_difference(model, pts, i, j, h / 2)
            gap = np.abs(d_h - d_h2)
            bad = (gap > rel_disagreement * np.maximum(np.abs(d_h), np.abs(d_h2))) & (gap > abs_floor)
            ratio = np.abs(d_h2) * np.minimum(w[:, i], w[:, j])
            pm = float(ratio.max())
            rows.append((len(level_max), k, i, j, pm, int(bad.sum())))
            unstable_count += int(bad.sum())
            pair_max[(i, j)] = pm
            best = max(best, pm)
        level_max.append(best)

    positive = [v for v in level_max if v > 0]
    stability = max(positive) / min(positive) if positive else 1.0
    return Condition2Report(
        grid_spec={"lo": lo, "hi": hi, "levels": levels, "h": h},
        max_ratio=level_max[-1],
        pair_max=pair_max,
        level_max=level_max,
        stability=stability,
        unstable=unstable_count > 0,
        unstable_count=unstable_count,
        rows=rows,
    )
