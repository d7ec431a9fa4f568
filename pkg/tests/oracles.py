"""Reference computations kept independent of the package code paths."""

import math

from scipy.integrate import quad


def tail_by_quadrature(x):
    """Upper Gaussian tail by numerical integration of the density."""
    dens = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    if x >= 0:
        val, _ = quad(dens, x, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        return val
    val, _ = quad(dens, x, -x, epsabs=0.0, epsrel=1e-13, limit=200)
    return val + tail_by_quadrature(-x)


def tail_by_erfc(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def tail_inverse_by_bisection(q, width=1e-13):
    """Brute-force inverse of the upper tail: bisect the bracket down to ``width``."""
    lo, hi = -40.0, 40.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if tail_by_erfc(mid) > q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def entropy_bits(p):
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log(1 - p)) / math.log(2)


def central_difference(f, x, step=1e-6):
    return (f(x + step) - f(x - step)) / (2 * step)


def a_coef(p, beta):
    return beta - entropy_bits(p)


def b_coef(p, eps):
    deriv = central_difference(entropy_bits, p)
    return deriv * math.sqrt(p * (1 - p)) * tail_inverse_by_bisection(eps * eps)


def delta_ref(p, eps, m1, m2):
    return math.sqrt(p * (1 - p) * (m1 + m2) / (m1 * m2)) * tail_inverse_by_bisection(eps * eps)
