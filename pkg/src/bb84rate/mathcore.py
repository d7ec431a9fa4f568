"""Scalar building blocks for the key-length formulas.

Entropies are in bits. The Gaussian tail is the *upper* tail
``Phi(x) = P(Z >= x)``, so ``Phi^{-1}(q)`` is positive for ``q < 1/2``.
"""

from __future__ import annotations

import math

__all__ = [
    "binary_entropy",
    "binary_entropy_total",
    "binary_entropy_derivative",
    "binary_entropy_inverse",
    "gaussian_upper_tail",
    "gaussian_upper_tail_inverse",
    "coef_a",
    "coef_b",
    "delta",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _check_open_unit(p, name="p"):
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {p!r}")


def binary_entropy(p: float) -> float:
    """Binary entropy ``-p log2 p - (1-p) log2 (1-p)`` for ``0 < p < 1``."""
    _check_open_unit(p)
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def binary_entropy_total(p: float) -> float:
    """Like :func:`binary_entropy` but defined on the closed interval, with h(0) = h(1) = 0."""
    if p == 0.0 or p == 1.0:
        return 0.0
    return binary_entropy(p)


def binary_entropy_derivative(p: float) -> float:
    _check_open_unit(p)
    return math.log2((1.0 - p) / p)


def binary_entropy_inverse(y: float) -> float:
    """Return the ``p`` in ``[0, 1/2]`` with ``h(p) = y``."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"entropy value must lie in [0, 1], got {y!r}")
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    # h is increasing on [0, 1/2]; 60 halvings reach double resolution.
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if binary_entropy_total(mid) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    return 0.5 * (lo + hi)


def gaussian_upper_tail(x: float) -> float:
    """Upper tail of the standard normal, ``Phi(x) = int_x^inf phi(t) dt``."""
    return 0.5 * math.erfc(x / _SQRT2)


# Acklam's rational approximation of the lower-tail quantile (relative error ~1e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam_lower(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        return -_acklam_lower(1.0 - p)
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def gaussian_upper_tail_inverse(q: float) -> float:
    """Inverse of :func:`gaussian_upper_tail`: the ``x`` with ``Phi(x) = q``.

    Rational starting point followed by Halley refinement against ``erfc``,
    which keeps full relative accuracy deep in the tail (``q`` down to ~1e-300).
    """
    _check_open_unit(q, "q")
    # Upper-tail quantile x(q) equals the lower-tail quantile of 1 - q, i.e. -z(q).
    x = -_acklam_lower(q)
    for _ in range(3):
        err = gaussian_upper_tail(x) - q
        dens = math.exp(-0.5 * x * x) / _SQRT2PI
        if dens == 0.0:
            break
        # Phi'(x) = -dens; Halley step for f(x) = Phi(x) - q.
        u = err / -dens
        step = u / (1.0 + 0.5 * x * u)
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def coef_a(p: float, beta: float) -> float:
    """First-order coefficient ``beta - h(p)``; negative values are returned as-is."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta!r}")
    return beta - binary_entropy(p)


def coef_b(p: float, eps: float) -> float:
    """Second-order coefficient ``h'(p) sqrt(p(1-p)) Phi^{-1}(eps^2)``.

    Requires ``p < 1/2`` and ``eps^2 < 1/2`` so that the coefficient is positive.
    """
    _check_open_unit(p)
    if p >= 0.5:
        raise ValueError(f"p must be below 1/2 for a positive correction, got {p!r}")
    _check_open_unit(eps, "eps")
    if eps * eps >= 0.5:
        raise ValueError(f"eps^2 must be below 1/2, got eps={eps!r}")
    return (binary_entropy_derivative(p) * math.sqrt(p * (1.0 - p))
            * gaussian_upper_tail_inverse(eps * eps))


def delta(p: float, eps: float, m1: float, m2: float) -> float:
    """Quantile-scaled standard error of an error-rate estimate.

    ``m1`` is the size of the unobserved block and ``m2`` the size of the
    sample it is estimated from; the value is symmetric in the two.
    ``p`` may sit on the closed interval, where the statistic is 0.
    """
    if m1 <= 0 or m2 <= 0:
        raise ValueError(f"sample sizes must be positive, got m1={m1!r}, m2={m2!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    _check_open_unit(eps, "eps")
    return (math.sqrt(p * (1.0 - p) * (m1 + m2) / (m1 * m2))
            * gaussian_upper_tail_inverse(eps * eps))
