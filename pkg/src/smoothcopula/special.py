"""Log-gamma, regularized incomplete beta and binomial tail probabilities.

These are small, dependency-free routines used by the smoothing laws and by
the closed-form smooth estimators.  ``log_gamma`` accepts arrays; the other
two are scalar functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Accuracy", "log_gamma", "reg_inc_beta", "binom_tail"]

_EULER_GAMMA = 0.57721566490153286061
_HALF_LOG_2PI = 0.91893853320467274178

# zeta(k) - 1 for k = 2, 3, ...
_ZETA_M1 = np.array([
    0.64493406684822644, 0.20205690315959429, 0.082323233711138192,
    0.036927755143369926, 0.01734306198444914, 0.0083492773819228268,
    0.0040773561979443394, 0.0020083928260822144, 0.00099457512781808534,
    0.00049418860411946456, 0.0002460865533080483, 0.00012271334757848915,
    6.1248135058704829e-5, 3.0588236307020494e-5, 1.5282259408651872e-5,
    7.6371976378997623e-6, 3.8172932649998399e-6, 1.9082127165539389e-6,
    9.5396203387279611e-7, 4.7693298678780646e-7, 2.3845050272773299e-7,
    1.1921992596531107e-7, 5.960818905125948e-8, 2.980350351465228e-8,
    1.4901554828365041e-8, 7.4507117898354295e-9, 3.7253340247884571e-9,
    1.862659723513049e-9, 9.3132743241966818e-10, 4.6566290650337841e-10,
    2.3283118336765055e-10, 1.164155017270052e-10, 5.8207720879027009e-11,
    2.9103850444970997e-11, 1.4551921891041984e-11, 7.275959835057481e-12,
    3.6379795473786512e-12, 1.8189896503070659e-12, 9.0949478402638893e-13,
    4.547473783042154e-13,
])

# Stirling series coefficients B_{2k} / (2k (2k - 1)), k = 1..6
_STIRLING = (1.0 / 12, -1.0 / 360, 1.0 / 1260, -1.0 / 1680, 1.0 / 1188,
             -691.0 / 360360)


@dataclass(frozen=True)
class Accuracy:
    """Convergence controls for iterative special-function evaluation."""

    rel_tol: float = 1e-15
    max_iter: int = 20000

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-6):
            raise ValueError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")
        if self.max_iter < 100:
            raise ValueError(f"max_iter must be >= 100, got {self.max_iter}")


DEFAULT_ACCURACY = Accuracy()


def _lgamma1p_series(z):
    # ln Gamma(1 + z) for |z| <= 0.5
    k = np.arange(2, _ZETA_M1.size + 2)
    powers = z[..., None] ** k
    tail = np.sum(((-1.0) ** k) * _ZETA_M1 * powers / k, axis=-1)
    return -np.log1p(z) + z * (1.0 - _EULER_GAMMA) + tail


def _stirling(x):
    inv = 1.0 / x
    inv2 = inv * inv
    corr = np.zeros_like(x)
    for c in reversed(_STIRLING):
        corr = corr * inv2 + c
    return (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + corr * inv


def log_gamma(x):
    """Natural logarithm of the gamma function for positive arguments.

    Parameters
    ----------
    x : float or array_like
        Strictly positive argument(s).

    Returns
    -------
    float or ndarray
        ``ln Gamma(x)``.  Relative error is below 1e-13 on [1e-3, 1e6],
        including the neighbourhoods of the zeros at 1 and 2.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is defined for x > 0 only")
    flat = arr.ravel()
    out = np.empty_like(flat)

    small = flat < 0.5
    near1 = (flat >= 0.5) & (flat <= 1.5)
    near2 = (flat > 1.5) & (flat <= 2.5)
    mid = (flat > 2.5) & (flat < 10.0)
    big = flat >= 10.0

    if small.any():
        z = flat[small]
        out[small] = _lgamma1p_series(z) - np.log(z)
    if near1.any():
        out[near1] = _lgamma1p_series(flat[near1] - 1.0)
    if near2.any():
        z = flat[near2] - 2.0
        out[near2] = np.log1p(z) + _lgamma1p_series(z)
    if mid.any():
        z = flat[mid]
        shift = np.ceil(10.0 - z)
        prod = np.ones_like(z)
        for i in range(int(shift.max())):
            prod = np.where(i < shift, prod * (z + i), prod)
        out[mid] = _stirling(z + shift) - np.log(prod)
    if big.any():
        out[big] = _stirling(flat[big])

    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _beta_cf(a, b, x, acc):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, acc.max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= acc.rel_tol:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def reg_inc_beta(a: float, b: float, x: float, accuracy: Accuracy = DEFAULT_ACCURACY) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``.

    Evaluated with the classical continued fraction, switching to
    ``1 - I_{1-x}(b, a)`` when ``x > (a + 1) / (a + b + 2)``.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"reg_inc_beta requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x > (a + 1.0) / (a + b + 2.0):
        front = math.exp(log_front - math.log(b))
        val = 1.0 - front * _beta_cf(b, a, 1.0 - x, accuracy)
    else:
        front = math.exp(log_front - math.log(a))
        val = front * _beta_cf(a, b, x, accuracy)
    return min(1.0, max(0.0, val))


def binom_tail(k: int, m: int, p: float, accuracy: Accuracy = DEFAULT_ACCURACY) -> float:
    """Upper tail ``Pr(S >= k)`` of ``S ~ Binomial(m, p)``.

    Uses ``Pr(S >= k) = I_p(k, m - k + 1)`` for ``1 <= k <= m``.
    """
    if int(k) != k or int(m) != m:
        raise ValueError("k and m must be integers")
    k, m = int(k), int(m)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not (0 <= k <= m + 1):
        raise ValueError(f"k must lie in [0, m + 1], got {k}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if k == 0:
        return 1.0
    if k == m + 1:
        return 0.0
    return reg_inc_beta(float(k), float(m - k + 1), float(p), accuracy)
