"""Smoothing distributions and the smooth empirical copula estimators.

Every shipped smoothing law is of Bernstein type: component ``j`` of the
smoothing vector at ``u`` is ``S_j / m_j`` with ``S_j ~ Binomial(m_j, u_j)``
independent across margins.  Averaging the empirical copula against this law
gives, in closed form,

    C_n^nu(u) = (1/n) sum_i prod_j Pr(S_j >= ceil(m_j R_ij / n)),

because ``R_ij / n <= S_j / m_j`` holds exactly when
``S_j >= ceil(m_j R_ij / n)``.  The ceiling is taken on integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh_tridiagonal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points
from .empirical import RankMatrix, compute_ranks, empirical_copula

__all__ = [
    "MonteCarloSpec",
    "SmoothingScheme",
    "BinomialKernel",
    "ceil_power",
    "smoothing_draw",
    "smoothing_draws",
    "smooth_copula_closed",
    "smooth_copula_enumerate",
    "smooth_copula_mc",
    "VarianceAudit",
    "variance_audit",
    "SmoothEmpiricalCopula",
]

KINDS = ("bernstein_fixed", "bernstein_rate", "beta", "adaptive_bernstein")
RULES = ("iqr", "constant")


def ceil_power(n: int, gamma: float) -> int:
    """``ceil(n ** gamma)`` computed exactly when ``gamma`` is a simple fraction."""
    frac = Fraction(gamma).limit_denominator(64)
    if abs(float(frac) - gamma) < 1e-12:
        p, q = frac.numerator, frac.denominator
        target = n ** p
        m = max(1, int(round(n ** float(frac))))
        while m ** q < target:
            m += 1
        while m > 1 and (m - 1) ** q >= target:
            m -= 1
        return m
    return max(1, math.ceil(n ** gamma - 1e-9))


@dataclass(frozen=True)
class MonteCarloSpec:
    """Number of draws and seed for Monte Carlo integration against the smoothing law."""

    draws: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.draws) != self.draws or self.draws < 1:
            raise ValueError(f"Monte Carlo draws must be a positive integer, got {self.draws}")


@dataclass(frozen=True)
class SmoothingScheme:
    """A family of binomial smoothing distributions indexed by the sample size.

    Use the constructors :meth:`bernstein_fixed`, :meth:`bernstein_rate`,
    :meth:`beta` and :meth:`adaptive_bernstein`.  The variance of component
    ``j`` is ``u_j (1 - u_j) / m_j``; whenever ``m_j >= ceil(n ** gamma)`` the
    variance condition holds with ``kappa = 1``.
    """

    kind: str
    degree: int | None = None
    gamma: float | None = None
    rule: str = "iqr"
    mc: MonteCarloSpec = field(default_factory=MonteCarloSpec)

    kappa = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown smoothing kind {self.kind!r}; choose from {KINDS}")
        if self.kind == "bernstein_fixed":
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"bernstein_fixed needs an integer degree >= 1, got {self.degree}")
        if self.kind in ("bernstein_rate", "adaptive_bernstein"):
            if self.gamma is None or not (1.0 <= self.gamma < 2.0):
                raise ValueError(f"{self.kind} needs gamma in [1, 2), got {self.gamma}")
        if self.kind == "beta" and self.gamma not in (None, 1.0):
            raise ValueError("the beta copula scheme has gamma = 1")
        if self.kind == "adaptive_bernstein" and self.rule not in RULES:
            raise ValueError(f"unknown adaptive rule {self.rule!r}; choose from {RULES}")

    @classmethod
    def bernstein_fixed(cls, m: int, mc: MonteCarloSpec | None = None):
        return cls("bernstein_fixed", degree=int(m), mc=mc or MonteCarloSpec())

    @classmethod
    def bernstein_rate(cls, gamma: float, mc: MonteCarloSpec | None = None):
        return cls("bernstein_rate", gamma=float(gamma), mc=mc or MonteCarloSpec())

    @classmethod
    def beta(cls, mc: MonteCarloSpec | None = None):
        return cls("beta", mc=mc or MonteCarloSpec())

    @classmethod
    def adaptive_bernstein(cls, gamma: float, rule: str = "iqr", mc: MonteCarloSpec | None = None):
        return cls("adaptive_bernstein", gamma=float(gamma), rule=rule, mc=mc or MonteCarloSpec())

    @property
    def rate(self) -> float | None:
        """The exponent ``gamma`` of the variance condition, ``None`` for a fixed degree."""
        if self.kind == "beta":
            return 1.0
        return self.gamma

    @property
    def data_adaptive(self) -> bool:
        return self.kind == "adaptive_bernstein" and self.rule != "constant"

    def degrees(self, n: int, d: int, sample=None) -> tuple:
        """Per-margin binomial degrees ``m_j`` for a sample of size ``n``."""
        if self.kind == "bernstein_fixed":
            return (int(self.degree),) * d
        if self.kind == "beta":
            return (int(n),) * d
        floor = ceil_power(n, self.gamma)
        if self.kind == "bernstein_rate" or self.rule == "constant":
            return (floor,) * d
        if sample is None:
            raise ValueError("the adaptive rule needs the sample values")
        X = np.asarray(sample, dtype=float)
        out = []
        for j in range(d):
            q75, q25 = np.quantile(X[:, j], [0.75, 0.25])
            iqr = q75 - q25
            m = floor if iqr <= 0 else max(floor, math.ceil(n / iqr))
            out.append(int(m))
        return tuple(out)

    def describe(self) -> str:
        if self.kind == "bernstein_fixed":
            return f"bernstein_fixed(m={self.degree})"
        if self.kind == "bernstein_rate":
            return f"bernstein_rate(gamma={self.gamma:g})"
        if self.kind == "adaptive_bernstein":
            return f"adaptive_bernstein(gamma={self.gamma:g},rule={self.rule})"
        return "beta"


class BinomialKernel:
    """Binomial(m, u_k) laws for a vector of success probabilities ``u_k``.

    Each law is stored on a window of its support wide enough that the
    discarded mass is below 1e-20; probabilities are normalised on the window.

    Parameters
    ----------
    m : int
        Number of trials.
    u : array_like, shape (A,)
        Success probabilities.
    width : float
        Half-width of the window in standard deviations (plus the same number
        of support points as slack).
    """

    def __init__(self, m: int, u, width: float = 10.0):
        self.m = int(m)
        u = np.asarray(u, dtype=float).ravel()
        self.u = u
        m = self.m
        sd = np.sqrt(m * u * (1.0 - u))
        lo = np.floor(m * u - width * sd - width).astype(np.int64)
        hi = np.ceil(m * u + width * sd + width).astype(np.int64)
        self.lo = np.clip(lo, 0, m)
        self.hi = np.clip(hi, 0, m)
        self.lo[u == 0.0] = 0
        self.hi[u == 0.0] = 0
        self.lo[u == 1.0] = m
        self.hi[u == 1.0] = m
        self.width = int((self.hi - self.lo).max()) + 1
        offsets = np.arange(self.width)
        s = self.lo[:, None] + offsets[None, :]
        valid = s <= self.hi[:, None]
        self.valid = valid

        interior = (u > 0.0) & (u < 1.0)
        logpmf = np.full(s.shape, -np.inf)
        if interior.any():
            ui = u[interior][:, None]
            si = s[interior].astype(float)
            # log pmf(s + 1) - log pmf(s) for s in the window
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.log(m - si) - np.log(si + 1.0) + np.log(ui) - np.log1p(-ui)
            step = np.where(valid[interior], step, 0.0)
            lp = np.concatenate([np.zeros((si.shape[0], 1)), np.cumsum(step[:, :-1], axis=1)], axis=1)
            lp = np.where(valid[interior], lp, -np.inf)
            logpmf[interior] = lp - lp.max(axis=1, keepdims=True)
        logpmf[~interior, 0] = 0.0
        pmf = np.exp(logpmf)
        pmf /= pmf.sum(axis=1, keepdims=True)
        self.pmf = pmf
        rev = np.cumsum(pmf[:, ::-1], axis=1)[:, ::-1]
        rev[:, 0] = 1.0
        self._upper = np.concatenate([rev, np.zeros((rev.shape[0], 1))], axis=1)

    @property
    def support(self) -> tuple:
        """Smallest and largest support point used by any of the laws."""
        return int(self.lo.min()), int(self.hi.max())

    def tail(self, c) -> np.ndarray:
        """``Pr(S_k >= c)`` for every law ``k`` and integer threshold(s) ``c``.

        Returns an array of shape ``(A,) + c.shape``.
        """
        c = np.asarray(c, dtype=np.int64)
        idx = c.reshape(1, -1) - self.lo[:, None]
        idx = np.clip(idx, 0, self.width)
        out = np.take_along_axis(self._upper, idx, axis=1)
        return out.reshape((self.u.size,) + c.shape)

    def gauss(self, nodes: int) -> tuple:
        """Gauss quadrature for each law, on the ``[0, 1]`` scale (``S / m``).

        Uses the three-term recurrence of the Krawtchouk polynomials.  When a
        law has at most ``nodes`` support points in its window, the support
        itself is returned with the binomial weights, so the rule is exact.

        Returns
        -------
        x, w : ndarray, shape (A, K)
            Nodes and weights; unused slots carry zero weight.
        """
        m = self.m
        K = int(nodes)
        A = self.u.size
        x = np.zeros((A, K))
        w = np.zeros((A, K))
        for k in range(A):
            count = int(self.hi[k] - self.lo[k]) + 1
            if count <= K:
                x[k, :count] = (self.lo[k] + np.arange(count)) / m
                w[k, :count] = self.pmf[k, :count]
                continue
            p = self.u[k]
            i = np.arange(K, dtype=float)
            diag = p * (m - i) + i * (1.0 - p)
            j = np.arange(1, K, dtype=float)
            off = np.sqrt(j * p * (1.0 - p) * (m - j + 1.0))
            vals, vecs = eigh_tridiagonal(diag, off)
            x[k] = np.clip(vals / m, 0.0, 1.0)
            w[k] = vecs[0] ** 2
        w /= w.sum(axis=1, keepdims=True)
        return x, w


def rank_thresholds(ranks: np.ndarray, m: int, n: int) -> np.ndarray:
    """``ceil(m R / n)`` in integer arithmetic."""
    return (m * np.asarray(ranks, dtype=np.int64) + n - 1) // n


def _stream(seed: int, u: np.ndarray, call_index: int) -> np.random.Generator:
    words = np.frombuffer(np.ascontiguousarray(u, dtype=float).tobytes(), dtype=np.uint32)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(call_index), *map(int, words)))
    return np.random.default_rng(ss)


def smoothing_draws(scheme: SmoothingScheme, u, degrees, rng, size: int) -> np.ndarray:
    """``size`` independent draws of the smoothing vector at ``u``; shape ``(size, d)``."""
    u = np.asarray(u, dtype=float)
    out = np.empty((size, u.size))
    for j, (uj, mj) in enumerate(zip(u, degrees)):
        out[:, j] = rng.binomial(mj, uj, size=size) / mj
    return out


def smoothing_draw(scheme: SmoothingScheme, u, ranks: RankMatrix, seed=0, call_index: int = 0):
    """One draw of the smoothing vector at ``u`` for the sample behind ``ranks``."""
    u = check_points(u, ranks.d).ravel()
    degrees = scheme.degrees(ranks.n, ranks.d, ranks.source)
    rng = _stream(seed, u, call_index)
    return smoothing_draws(scheme, u, degrees, rng, 1)[0]


def smooth_copula_closed(ranks: RankMatrix, scheme: SmoothingScheme, u, degrees=None):
    """Closed-form smooth empirical copula at point(s) ``u`` of shape ``(..., d)``.

    Parameters
    ----------
    ranks : RankMatrix
    scheme : SmoothingScheme
    u : array_like
    degrees : tuple of int, optional
        Overrides the per-margin degrees implied by ``scheme``.
    """
    u = check_points(u, ranks.d)
    n, d = ranks.n, ranks.d
    if degrees is None:
        degrees = scheme.degrees(n, d, ranks.source)
    flat = u.reshape(-1, d)
    out = np.empty(flat.shape[0])
    step = max(1, 4_000_000 // n)
    for start in range(0, flat.shape[0], step):
        block = flat[start:start + step]
        prod = np.ones((block.shape[0], n))
        for j in range(d):
            kern = BinomialKernel(degrees[j], block[:, j])
            prod *= kern.tail(rank_thresholds(ranks.ranks[:, j], degrees[j], n))
        out[start:start + step] = prod.mean(axis=1)
    out = out.reshape(u.shape[:-1])
    return float(out) if out.ndim == 0 else out


def smooth_copula_enumerate(ranks: RankMatrix, u, degrees, max_outcomes: int = 1_000_000) -> float:
    """Smooth empirical copula at a single point by summing over every binomial outcome.

    Evaluates ``sum_s prod_j P(S_j = s_j) C_n(s_1/m_1, ..., s_d/m_d)``.  Slow,
    but it shares no code with :func:`smooth_copula_closed` beyond the
    empirical copula itself.
    """
    u = check_points(u, ranks.d).ravel()
    degrees = tuple(int(m) for m in degrees)
    total = math.prod(m + 1 for m in degrees)
    if total > max_outcomes:
        raise ValueError(f"{total} binomial outcomes exceed the enumeration limit {max_outcomes}")
    pmfs = [np.array([math.comb(m, s) * uj ** s * (1.0 - uj) ** (m - s) for s in range(m + 1)])
            for uj, m in zip(u, degrees)]
    mesh = np.stack(np.meshgrid(*[np.arange(m + 1) / m for m in degrees], indexing="ij"), axis=-1)
    values = np.asarray(empirical_copula(ranks, mesh))
    weight = pmfs[0]
    for p in pmfs[1:]:
        weight = np.multiply.outer(weight, p)
    return float(np.sum(weight * values))


def smooth_copula_mc(ranks: RankMatrix, scheme: SmoothingScheme, u, call_index: int = 0,
                     degrees=None):
    """Monte Carlo estimate of the smooth empirical copula at a single point ``u``.

    Returns
    -------
    estimate, stderr : float
        Mean of ``C_n(W)`` over ``scheme.mc.draws`` draws of the smoothing
        vector, and its standard error.  The stream is derived from
        ``(scheme.mc.seed, u, call_index)``.
    """
    u = check_points(u, ranks.d).ravel()
    n, d = ranks.n, ranks.d
    if degrees is None:
        degrees = scheme.degrees(n, d, ranks.source)
    rng = _stream(scheme.mc.seed, u, call_index)
    M = scheme.mc.draws
    thresh = np.column_stack([rank_thresholds(ranks.ranks[:, j], degrees[j], n) for j in range(d)])
    total = 0.0
    total_sq = 0.0
    step = max(1, 2_000_000 // (n * d))
    done = 0
    while done < M:
        size = min(step, M - done)
        counts = np.column_stack([rng.binomial(degrees[j], u[j], size=size) for j in range(d)])
        vals = np.all(counts[:, None, :] >= thresh[None, :, :], axis=-1).sum(axis=1) / n
        total += vals.sum()
        total_sq += np.sum(vals * vals)
        done += size
    est = total / M
    if M == 1:
        return est, 0.0
    var = max(total_sq / M - est * est, 0.0) * M / (M - 1)
    return est, math.sqrt(var / M)


@dataclass
class VarianceAudit:
    """Empirical check of ``Var(W_j) <= kappa u (1 - u) / n^gamma`` with ``kappa = 1``.

    ``rows`` holds one tuple per (margin, grid point):
    ``(j, u, m_j, empirical_var, stderr_var, analytic_var, bound, violation)``.
    """

    n: int
    gamma: float
    kappa: float
    draws: int
    rows: list

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r[-1])

    @property
    def analytic_violations(self) -> int:
        return sum(1 for r in self.rows if r[5] > r[6] * (1 + 1e-12))

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "u", "m", "empirical_var", "stderr_var", "analytic_var", "bound", "violation"])
            for j, u, m, ev, se, av, b, v in self.rows:
                writer.writerow([j, f"{u:.17g}", m, f"{ev:.17g}", f"{se:.17g}", f"{av:.17g}",
                                 f"{b:.17g}", int(v)])


def variance_audit(scheme: SmoothingScheme, n: int, u_grid, draws: int = 100_000,
                   seed: int = 0, gamma: float | None = None, d: int = 2, sample=None,
                   n_sigma: float = 3.0) -> VarianceAudit:
    """Compare empirical smoothing variances with the bound ``u (1 - u) / n^gamma``.

    A grid point is a violation when the empirical variance exceeds the bound
    by more than ``n_sigma`` standard errors of the variance estimator.
    """
    if draws < 1000:
        raise ValueError(f"variance_audit needs at least 1000 draws, got {draws}")
    gamma = scheme.rate if gamma is None else gamma
    if gamma is None:
        raise ValueError("a fixed-degree scheme needs an explicit gamma to audit against")
    degrees = scheme.degrees(n, d, sample)
    u_grid = np.asarray(u_grid, dtype=float).ravel()
    root = np.random.SeedSequence(seed)
    streams = root.spawn(d * u_grid.size)
    rows = []
    for j in range(d):
        m = degrees[j]
        for i, u in enumerate(u_grid):
            rng = np.random.default_rng(streams[j * u_grid.size + i])
            w = rng.binomial(m, u, size=draws) / m
            centred = w - w.mean()
            var = float(np.mean(centred ** 2)) * draws / (draws - 1)
            m4 = float(np.mean(centred ** 4))
            se = math.sqrt(max(m4 - var * var, 0.0) / draws)
            analytic = u * (1.0 - u) / m
            bound = scheme.kappa * u * (1.0 - u) / n ** gamma
            rows.append((j, float(u), m, var, se, analytic, bound, var > bound + n_sigma * se))
    return VarianceAudit(n=n, gamma=gamma, kappa=scheme.kappa, draws=draws, rows=rows)


class SmoothEmpiricalCopula(BaseEstimator):
    """Smooth empirical copula with binomial (Bernstein-type) smoothing.

    Parameters
    ----------
    kind : {"beta", "bernstein_fixed", "bernstein_rate", "adaptive_bernstein"}, default="beta"
    degree : int, optional
        Degree for ``bernstein_fixed``.
    gamma : float, optional
        Rate exponent for ``bernstein_rate`` and ``adaptive_bernstein``.
    rule : {"iqr", "constant"}, default="iqr"
        Degree rule of ``adaptive_bernstein``.
    mc_draws : int, default=10000
        Draws used by :meth:`cdf_mc`.
    random_state : int, default=0
        Seed of the Monte Carlo streams.

    Attributes
    ----------
    ranks_ : RankMatrix
    scheme_ : SmoothingScheme
    degrees_ : tuple of int
    """

    def __init__(self, kind="beta", degree=None, gamma=None, rule="iqr", mc_draws=10_000,
                 random_state=0):
        self.kind = kind
        self.degree = degree
        self.gamma = gamma
        self.rule = rule
        self.mc_draws = mc_draws
        self.random_state = random_state

    def _make_scheme(self):
        mc = MonteCarloSpec(self.mc_draws, self.random_state)
        return SmoothingScheme(self.kind, degree=self.degree, gamma=self.gamma, rule=self.rule, mc=mc)

    def fit(self, X, y=None):
        self.scheme_ = self._make_scheme()
        self.ranks_ = compute_ranks(X)
        self.n_samples_, self.n_features_in_ = self.ranks_.ranks.shape
        self.degrees_ = self.scheme_.degrees(self.n_samples_, self.n_features_in_, self.ranks_.source)
        return self

    def cdf(self, U):
        """Closed-form value of the smooth empirical copula at ``U``."""
        check_is_fitted(self, "ranks_")
        return smooth_copula_closed(self.ranks_, self.scheme_, U, degrees=self.degrees_)

    def cdf_mc(self, U):
        """Monte Carlo values and standard errors at the rows of ``U``."""
        check_is_fitted(self, "ranks_")
        U = np.atleast_2d(np.asarray(U, dtype=float))
        res = [smooth_copula_mc(self.ranks_, self.scheme_, u, call_index=i, degrees=self.degrees_)
               for i, u in enumerate(U)]
        est, se = (np.array(v) for v in zip(*res))
        return est, se
