"""Input validation helpers shared by the estimators and the process code."""
from __future__ import annotations

import numbers

import numpy as np


class TieError(ValueError):
    """A column of the sample contains tied values."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(
            f"column {column} contains tied values; continuous margins are required")


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_points(u, d: int) -> np.ndarray:
    """Validate evaluation point(s) in the unit cube; returns a float array ``(..., d)``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}, got shape {u.shape}")
    if not np.all((u >= 0.0) & (u <= 1.0)):
        raise ValueError("evaluation points must lie in [0, 1]^d")
    return u


def check_sample(X, min_dim: int = 2) -> np.ndarray:
    """Validate a copula-scale sample: 2-d, finite, values in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"sample must be a 2-d array, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < min_dim:
        raise ValueError(f"sample needs n >= 1 rows and d >= {min_dim} columns, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("sample contains non-finite values")
    if not np.all((X >= 0.0) & (X <= 1.0)):
        raise ValueError("sample values must lie in [0, 1]")
    return X


def check_no_ties(X: np.ndarray) -> None:
    srt = np.sort(X, axis=0)
    tied = np.any(np.diff(srt, axis=0) == 0, axis=0)
    if tied.any():
        raise TieError(int(np.flatnonzero(tied)[0]))
