"""Ranks, the empirical copula and the raw empirical processes.

The empirical copula is the empirical distribution function of the rank
vectors scaled by ``1/n``.  Comparisons ``R_ij / n <= u_j`` are reduced to
integer thresholds so that lattice points ``i / n`` are classified exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import TieError, check_no_ties, check_points, check_sample

__all__ = [
    "RankMatrix",
    "EvaluationGrid",
    "compute_ranks",
    "empirical_copula",
    "empirical_process_alpha",
    "marginal_process_alpha_j",
    "read_sample_csv",
    "write_sample_csv",
    "EmpiricalCopula",
    "PseudoObservations",
    "TieError",
]


@dataclass(frozen=True)
class RankMatrix:
    """Column-wise ranks ``R_ij`` in ``{1, ..., n}``.

    ``source`` keeps the sample the ranks were computed from, which
    data-adaptive smoothing rules need.
    """

    ranks: np.ndarray
    source: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.ranks)
        if r.ndim != 2:
            raise ValueError("ranks must be a 2-d array")
        n = r.shape[0]
        if not np.array_equal(np.sort(r, axis=0),
                              np.broadcast_to(np.arange(1, n + 1)[:, None], r.shape)):
            raise ValueError("each column of a rank matrix must be a permutation of 1..n")
        object.__setattr__(self, "ranks", r.astype(np.int64))

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def d(self) -> int:
        return self.ranks.shape[1]


def compute_ranks(sample) -> RankMatrix:
    """Ranks ``R_ij = #{k : X_kj <= X_ij}``; ties raise ``TieError``."""
    X = check_array(sample, dtype=float, ensure_min_samples=1, ensure_min_features=1)
    check_no_ties(X)
    order = np.argsort(X, axis=0, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(1, X.shape[0] + 1)
    for j in range(X.shape[1]):
        ranks[order[:, j], j] = rows
    return RankMatrix(ranks, source=X)


def lattice_threshold(u, denom: int):
    """Largest integer ``t`` in ``[0, denom]`` with ``t / denom <= u`` (float division)."""
    u = np.asarray(u, dtype=float)
    t = np.floor(u * denom).astype(np.int64)
    t = np.clip(t, 0, denom)
    t = t + ((t + 1) / denom <= u) * (t < denom)
    t = t - ((t / denom) > u) * (t > 0)
    return t


def empirical_copula(ranks: RankMatrix, u, variant: str = "scaled_ranks"):
    """Evaluate the empirical copula at point(s) ``u`` of shape ``(..., d)``.

    Parameters
    ----------
    ranks : RankMatrix
    u : array_like
        Evaluation point(s) in ``[0, 1]^d``.
    variant : {"scaled_ranks", "deheuvels"}
        ``scaled_ranks`` is ``(1/n) sum_i 1(R_i / n <= u)``; ``deheuvels``
        rescales the ranks by ``n + 1`` instead of ``n``.
    """
    u = check_points(u, ranks.d)
    n = ranks.n
    if variant == "scaled_ranks":
        denom = n
    elif variant == "deheuvels":
        denom = n + 1
    else:
        raise ValueError(f"unknown variant {variant!r}")
    flat = u.reshape(-1, ranks.d)
    thresh = lattice_threshold(flat, denom)
    out = np.empty(flat.shape[0])
    step = max(1, 2_000_000 // max(n, 1))
    for start in range(0, flat.shape[0], step):
        t = thresh[start:start + step]
        inside = np.all(ranks.ranks[None, :, :] <= t[:, None, :], axis=-1)
        out[start:start + step] = inside.sum(axis=1) / n
    out = out.reshape(u.shape[:-1])
    return float(out) if out.ndim == 0 else out


def _joint_ecdf(sample, u):
    flat = u.reshape(-1, sample.shape[1])
    out = np.empty(flat.shape[0])
    step = max(1, 2_000_000 // sample.shape[0])
    for start in range(0, flat.shape[0], step):
        inside = np.all(sample[None, :, :] <= flat[start:start + step, None, :], axis=-1)
        out[start:start + step] = inside.mean(axis=1)
    return out.reshape(u.shape[:-1])


def empirical_process_alpha(sample, model, u):
    """``sqrt(n) {G_n(u) - C(u)}`` with ``G_n`` the empirical d.f. of ``sample``."""
    X = check_sample(sample)
    u = check_points(u, X.shape[1])
    out = np.sqrt(X.shape[0]) * (_joint_ecdf(X, u) - model.cdf(u))
    return float(out) if np.ndim(out) == 0 else out


def marginal_process_alpha_j(sample, j: int, u_j):
    """``sqrt(n) {G_{n,j}(u_j) - u_j}`` for margin ``j`` (0-based)."""
    X = check_sample(sample)
    u_j = np.asarray(u_j, dtype=float)
    if not np.all((u_j >= 0) & (u_j <= 1)):
        raise ValueError("u_j must lie in [0, 1]")
    col = np.sort(X[:, j])
    g = np.searchsorted(col, u_j, side="right") / X.shape[0]
    out = np.sqrt(X.shape[0]) * (g - u_j)
    return float(out) if out.ndim == 0 else out


@dataclass
class EvaluationGrid:
    """Finite set of points of ``[0, 1]^d`` used to approximate suprema.

    Points are stored as a tensor product of per-axis coordinates, optionally
    restricted by a boolean ``mask`` of the tensor shape.
    """

    axes: tuple
    mask: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        axes = tuple(np.unique(np.asarray(a, dtype=float)) for a in self.axes)
        if len(axes) < 1 or any(a.size == 0 for a in axes):
            raise ValueError("an evaluation grid needs at least one point per axis")
        if any(a[0] < 0 or a[-1] > 1 for a in axes):
            raise ValueError("grid coordinates must lie in [0, 1]")
        self.axes = axes
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.shape:
                raise ValueError("mask shape does not match the tensor grid")
            if not self.mask.any():
                raise ValueError("an evaluation grid needs at least one point")

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(self.mask.sum()) if self.mask is not None else int(np.prod(self.shape))

    @property
    def points(self) -> np.ndarray:
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        pts = mesh.reshape(-1, self.d)
        if self.mask is not None:
            pts = pts[self.mask.ravel()]
        return pts

    def mesh(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def sup(self, field_values) -> float:
        """Maximum of ``|field_values|`` over the grid points."""
        vals = np.abs(np.asarray(field_values))
        if self.mask is not None:
            vals = vals[self.mask]
        return float(vals.max())

    @classmethod
    def build(cls, d: int, n: int | None = None, resolution: int | None = None,
              lattice: bool = True, boundary: bool = True) -> "EvaluationGrid":
        """Tensor grid from a uniform axis, the rank lattice and boundary-adjacent points.

        Parameters
        ----------
        d : int
        n : int, optional
            Sample size; needed for the lattice ``{i/n}`` and the points
            ``1/(2n)`` and ``1 - 1/(2n)``.
        resolution : int, optional
            Points per axis of the uniform part; 101 for ``d = 2``, 41 otherwise.
        lattice : bool
            Add ``{0, 1/n, ..., 1}`` on every axis.
        boundary : bool
            Add ``1/(2n)`` and ``1 - 1/(2n)`` on every axis.
        """
        if resolution is None:
            resolution = 101 if d == 2 else 41
        if resolution < 2:
            raise ValueError("resolution must be >= 2 so the grid contains 0 and 1")
        pieces = [np.linspace(0.0, 1.0, resolution)]
        parts = [f"uniform {resolution}"]
        if n is not None and lattice:
            pieces.append(np.arange(n + 1) / n)
            parts.append(f"lattice 1/{n}")
        if n is not None and boundary:
            pieces.append(np.array([0.5 / n, 1.0 - 0.5 / n]))
            parts.append("boundary 1/(2n)")
        axis = np.unique(np.concatenate(pieces))
        return cls(tuple(axis for _ in range(d)), description=" + ".join(parts) + f" per axis, d={d}")

    @classmethod
    def from_points(cls, points) -> "EvaluationGrid":
        """Grid made of an arbitrary finite point set."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts.shape[1]
        axes = tuple(np.unique(pts[:, j]) for j in range(d))
        idx = tuple(np.searchsorted(axes[j], pts[:, j]) for j in range(d))
        mask = np.zeros(tuple(a.size for a in axes), dtype=bool)
        mask[idx] = True
        return cls(axes, mask=mask, description=f"{pts.shape[0]} explicit points")

    @classmethod
    def corners(cls, d: int) -> "EvaluationGrid":
        return cls(tuple(np.array([0.0, 1.0]) for _ in range(d)), description="corners")


def read_sample_csv(path) -> np.ndarray:
    """Read a headered sample file with columns ``u1..ud``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty sample file")
        expected = [f"u{j + 1}" for j in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return check_sample(np.array(rows, dtype=float).reshape(-1, len(header)))


def write_sample_csv(sample, path) -> None:
    X = check_sample(sample)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"u{j + 1}" for j in range(X.shape[1])])
        for row in X:
            writer.writerow([f"{v:.17g}" for v in row])


class EmpiricalCopula(BaseEstimator):
    """Empirical copula estimator.

    Parameters
    ----------
    variant : {"scaled_ranks", "deheuvels"}, default="scaled_ranks"
        Rescaling of the ranks, ``n`` or ``n + 1``.

    Attributes
    ----------
    ranks_ : RankMatrix
    n_samples_ : int
    n_features_in_ : int
    """

    def __init__(self, variant="scaled_ranks"):
        self.variant = variant

    def fit(self, X, y=None):
        self.ranks_ = compute_ranks(X)
        self.n_samples_, self.n_features_in_ = self.ranks_.ranks.shape
        return self

    def cdf(self, U):
        check_is_fitted(self, "ranks_")
        return empirical_copula(self.ranks_, U, variant=self.variant)


class PseudoObservations(TransformerMixin, BaseEstimator):
    """Map data to the copula scale through the fitted marginal empirical d.f.s.

    ``fit_transform`` on the training data returns the scaled ranks ``R / n``.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        check_no_ties(X)
        self.sorted_columns_ = np.sort(X, axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "sorted_columns_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        n = self.sorted_columns_.shape[0]
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = np.searchsorted(self.sorted_columns_[:, j], X[:, j], side="right") / n
        return out
