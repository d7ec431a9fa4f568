"""Finite-length and second-order key lengths for asymmetric-basis BB84.

Conventions used throughout:

* The bit basis is chosen with probability ``1 - r0`` by both parties, so
  on average ``n (1 - r0)^2`` rounds are sifted in the bit basis and
  ``n r0^2`` in the phase basis.
* A fraction ``r1`` (``r2``) of the bit-basis (phase-basis) rounds is
  disclosed as check bits. Keys from the bit basis are priced with the
  phase-basis error rate ``p2`` and vice versa.
* Integer bookkeeping: check-bit counts round half up, sacrificed lengths
  round up, key lengths round down, and the verification tag has
  ``ceil(log2 n)`` bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .mathcore import (
    binary_entropy,
    binary_entropy_total,
    coef_a,
    coef_b,
    delta,
)

__all__ = [
    "RateParams",
    "Ratios",
    "RatioChoice",
    "SideAllocation",
    "KeyLengthReport",
    "RateCurve",
    "ZeroRateError",
    "UnestimableSideError",
    "InconclusiveEstimateError",
    "verification_length",
    "allocate",
    "sacrificed_length_bit_side",
    "sacrificed_length_phase_side",
    "finite_key_length",
    "averaged_key_length",
    "optimal_ratios",
    "max_key_length",
    "numeric_optimize",
    "rate_curve",
    "second_order_rate",
]


class ZeroRateError(ValueError):
    """The first-order coefficient of the key basis is not positive."""


class UnestimableSideError(ValueError):
    """A side produces key bits but has no sample to estimate its leakage from."""


class InconclusiveEstimateError(ValueError):
    """The pessimistic error-rate estimate reached 1; the run must abort."""


def _check_prob(p, name):
    if not 0.0 < p < 0.5:
        raise ValueError(f"{name} must lie in (0, 1/2), got {p!r}")


@dataclass(frozen=True)
class RateParams:
    p1: float
    p2: float
    eps: float
    beta: float
    n: float

    def __post_init__(self):
        _check_prob(self.p1, "p1")
        _check_prob(self.p2, "p2")
        if not 0.0 < self.eps < 1.0 or self.eps * self.eps >= 0.5:
            raise ValueError(f"eps must lie in (0, 1) with eps^2 < 1/2, got {self.eps!r}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta!r}")
        if not self.n >= 1:
            raise ValueError(f"n must be at least 1, got {self.n!r}")

    def swapped(self) -> "RateParams":
        return RateParams(self.p2, self.p1, self.eps, self.beta, self.n)


@dataclass(frozen=True)
class Ratios:
    """Phase-basis probability ``r0`` and check fractions ``r1`` (bit) and ``r2`` (phase)."""

    r0: float
    r1: float = 0.0
    r2: float = 1.0

    def __post_init__(self):
        for name in ("r0", "r1", "r2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")

    def swapped(self) -> "Ratios":
        """Exchange the roles of the two bases."""
        return Ratios(1.0 - self.r0, self.r2, self.r1)

    def as_tuple(self):
        return (self.r0, self.r1, self.r2)


@dataclass(frozen=True)
class RatioChoice:
    ratios: Ratios
    r0_unclamped: float
    clamped: bool
    swapped: bool


@dataclass(frozen=True)
class SideAllocation:
    """Integer split of sifted rounds into key bits and check bits per basis."""

    key1: int
    check1: int
    key2: int
    check2: int


@dataclass(frozen=True)
class KeyLengthReport:
    sacrificed1: int
    sacrificed2: int
    verification_bits: int
    length_bit_side: int
    length_phase_side: int
    reconciled1: int = 0
    reconciled2: int = 0

    @property
    def total(self) -> int:
        return self.length_bit_side + self.length_phase_side


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def verification_length(n) -> int:
    """Tag length ``ceil(log2 n)``."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n!r}")
    return int(math.ceil(math.log2(n)))


def allocate(n1: int, n2: int, r1: float, r2: float) -> SideAllocation:
    """Split sifted counts into key and check bits.

    Check counts are ``round(r * n)``; a side whose key bits need the other
    side's sample gets at least one check bit when ``r > 0``.
    """
    if n1 < 0 or n2 < 0:
        raise ValueError("sifted counts must be non-negative")
    c1 = _round_half_up(r1 * n1)
    c2 = _round_half_up(r2 * n2)
    if n2 - c2 > 0 and c1 == 0 and r1 > 0 and n1 > 0:
        c1 = 1
    if n1 - c1 > 0 and c2 == 0 and r2 > 0 and n2 > 0:
        c2 = 1
    return SideAllocation(n1 - c1, c1, n2 - c2, c2)


def _pessimistic_entropy(p_hat, eps, key_bits, checks):
    p_up = p_hat + delta(p_hat, eps, key_bits, checks)
    if p_up >= 1.0:
        raise InconclusiveEstimateError(
            f"pessimistic error rate {p_up:.6g} >= 1; estimate inconclusive, abort run")
    # Beyond 1/2 the entropy turns down; charge the full block instead.
    if p_up >= 0.5:
        return 1.0
    return binary_entropy_total(p_up)


def _sacrificed(key_bits, checks, p_hat, eps, side):
    if key_bits <= 0:
        return 0
    if checks < 1:
        raise UnestimableSideError(
            f"unestimable side: {side}-side keys exist but the other basis has no check bits")
    if p_hat is None or not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"estimated error rate must lie in [0, 1], got {p_hat!r}")
    return int(math.ceil(key_bits * _pessimistic_entropy(p_hat, eps, key_bits, checks)))


def sacrificed_length_bit_side(n1, n2, r1, r2, p2, eps) -> int:
    """Bits removed by privacy amplification from the bit-basis key.

    ``ceil(k1 * h(p2 + delta(p2, eps, k1, c2)))`` with ``k1`` the bit-basis key
    bits and ``c2`` the phase-basis check bits.
    """
    a = allocate(n1, n2, r1, r2)
    return _sacrificed(a.key1, a.check2, p2, eps, "bit")


def sacrificed_length_phase_side(n1, n2, r1, r2, p1, eps) -> int:
    a = allocate(n1, n2, r1, r2)
    return _sacrificed(a.key2, a.check1, p1, eps, "phase")


def finite_key_length(n1, n2, ratios: Ratios, p1, p2, eps, beta, n) -> KeyLengthReport:
    """Exact key length for realised sifted counts ``n1``, ``n2``.

    Each side yields ``floor(beta * k) - m - m3`` bits, floored at zero;
    a side with no key bits pays neither ``m`` nor ``m3``. ``p1`` / ``p2``
    may be ``None`` when the side they price produces no key bits.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta!r}")
    a = allocate(n1, n2, ratios.r1, ratios.r2)
    m1 = _sacrificed(a.key1, a.check2, p2, eps, "bit")
    m2 = _sacrificed(a.key2, a.check1, p1, eps, "phase")
    m3 = verification_length(n)
    x1 = int(math.floor(beta * a.key1))
    x2 = int(math.floor(beta * a.key2))
    len1 = max(0, x1 - m1 - m3) if a.key1 > 0 else 0
    len2 = max(0, x2 - m2 - m3) if a.key2 > 0 else 0
    return KeyLengthReport(m1, m2, m3, len1, len2, x1, x2)


def _averaged_terms(n, a_bit, a_phase, b_bit, b_phase, r0, r1, r2):
    """Vectorised first- and second-order terms of the averaged key length.

    Returns ``(first, second_bit, second_phase)``; unestimable cells are NaN.
    Coefficients of a side are only read where that side generates bits.
    """
    r0, r1, r2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r0, r1, r2)))
    s0 = (1.0 - r0) ** 2
    t0 = r0 ** 2
    gen_bit = s0 * (1.0 - r1)
    gen_phase = t0 * (1.0 - r2)
    est_bit = t0 * r2          # phase-basis checks price bit-basis keys
    est_phase = s0 * r1

    with np.errstate(divide="ignore", invalid="ignore"):
        first = n * (np.where(gen_bit > 0, a_bit * gen_bit, 0.0)
                     + np.where(gen_phase > 0, a_phase * gen_phase, 0.0))
        sq_bit = np.sqrt(gen_bit * (gen_bit + est_bit) / est_bit)
        sq_phase = np.sqrt(gen_phase * (gen_phase + est_phase) / est_phase)
    sq_bit = np.where(gen_bit > 0, np.where(est_bit > 0, sq_bit, np.nan), 0.0)
    sq_phase = np.where(gen_phase > 0, np.where(est_phase > 0, sq_phase, np.nan), 0.0)
    rn = math.sqrt(n)
    second_bit = np.where(gen_bit > 0, rn * b_bit * sq_bit, 0.0)
    second_phase = np.where(gen_phase > 0, rn * b_phase * sq_phase, 0.0)
    return first, second_bit, second_phase


def _coefficients(params):
    return (coef_a(params.p2, params.beta), coef_a(params.p1, params.beta),
            coef_b(params.p2, params.eps), coef_b(params.p1, params.eps))


def averaged_key_length(params: RateParams, ratios: Ratios) -> float:
    """Second-order approximation of the key length averaged over sifting.

    The bit-basis key is priced by ``A(p2)``, ``B(p2, eps)`` and the
    phase-basis key by ``A(p1)``, ``B(p1, eps)``. A square-root term whose
    side generates no bits is zero, whatever its denominator.
    """
    first, s_bit, s_phase = _averaged_terms(params.n, *_coefficients(params), *ratios.as_tuple())
    value = float(first - s_bit - s_phase)
    if math.isnan(value):
        raise UnestimableSideError(
            f"unestimable side: ratios {ratios.as_tuple()} generate keys without a check sample")
    return value


def _key_basis(params):
    """Error rate pricing the key basis, and whether the bases swap roles."""
    if binary_entropy(params.p2) <= binary_entropy(params.p1):
        return params.p2, False
    return params.p1, True


def optimal_ratios(params: RateParams) -> RatioChoice:
    """Asymptotically optimal ratios: ``r0 = sqrt(B/(2A)) n^{-1/4}``, ``r1 = 0``, ``r2 = 1``.

    When the phase basis is the cleaner one the bases swap roles and the
    result is ``(1 - r0, 1, 0)``. ``r0`` is clamped to ``[1/n, 1/2]``.
    """
    p, swapped = _key_basis(params)
    a = coef_a(p, params.beta)
    if a <= 0:
        raise ZeroRateError(f"zero-rate regime: A({p}) = {a:.6g} <= 0")
    b = coef_b(p, params.eps)
    raw = math.sqrt(b / (2.0 * a)) * params.n ** -0.25
    r0 = min(max(raw, 1.0 / params.n), 0.5)
    clamped = r0 != raw
    ratios = Ratios(r0, 0.0, 1.0)
    if swapped:
        ratios = ratios.swapped()
    return RatioChoice(ratios, raw, clamped, swapped)


def max_key_length(params: RateParams) -> float:
    """Optimised averaged key length ``n A - n^{3/4} 2 sqrt(2 A B)``."""
    p, _ = _key_basis(params)
    a = coef_a(p, params.beta)
    if a <= 0:
        raise ZeroRateError(f"zero-rate regime: A({p}) = {a:.6g} <= 0")
    b = coef_b(p, params.eps)
    n = params.n
    return n * a - n ** 0.75 * 2.0 * math.sqrt(2.0 * a * b)


def second_order_rate(a, b, n):
    """Optimised rate per transmission, ``A (1 - n^{-1/4} 2 sqrt(2 B / A))``."""
    return a * (1.0 - np.asarray(n, dtype=float) ** -0.25 * 2.0 * math.sqrt(2.0 * b / a))


def _axis(lo, points):
    half = np.geomspace(lo, 0.5, points)
    return np.unique(np.concatenate(([0.0], half, 1.0 - half, [1.0])))


def numeric_optimize(params: RateParams, points: int = 25, starts: int = 5,
                     sweeps: int = 40):
    """Maximise :func:`averaged_key_length` numerically.

    Deterministic: a grid with ``points`` log-spaced values per half axis
    (mirrored about 1/2, so both basis orientations are covered) followed
    by bounded coordinate refinement from the ``starts`` best grid cells.
    The default gives a 50 x 26 x 26 grid over ``(r0, r1, r2)``.
    Cells where the formula is undefined count as ``-inf``.

    Returns ``(Ratios, value)``.
    """
    coeffs = _coefficients(params)
    n = params.n

    def objective(r0, r1, r2):
        first, sb, sp = _averaged_terms(n, *coeffs, r0, r1, r2)
        v = first - sb - sp
        return np.where(np.isnan(v), -np.inf, v)

    lo0 = min(max(1.0 / n, 1e-9), 1e-3) * 0.5
    ax0 = _axis(lo0, points)[1:-1]   # r0 in {0, 1} generates nothing useful
    ax12 = _axis(1e-6, max(points // 2, 10))
    axes = (ax0, ax12, ax12)
    grid = objective(ax0[:, None, None], ax12[None, :, None], ax12[None, None, :])

    flat = np.argsort(grid, axis=None, kind="stable")[::-1]
    found = []
    for idx in flat[:starts]:
        i, j, k = np.unravel_index(idx, grid.shape)
        if not np.isfinite(grid[i, j, k]):
            break
        x, v = _refine(objective, axes, [float(ax0[i]), float(ax12[j]), float(ax12[k])],
                       float(grid[i, j, k]), sweeps)
        found.append((v, x))
    if not found:
        raise ZeroRateError("no feasible ratios found")
    top = max(v for v, _ in found)
    # Mirror-image optima tie when p1 == p2; prefer the orientation optimal_ratios reports.
    _, swapped = _key_basis(params)
    ties = [(v, x) for v, x in found if v >= top - 1e-12 * abs(top)]
    v, x = min(ties, key=lambda vx: (vx[1][0] <= 0.5) == swapped)
    return Ratios(*x), v


def _refine(objective, axes, x, v, sweeps):
    def f(coord, val, base):
        y = list(base)
        y[coord] = val
        return float(objective(*y))

    for _ in range(sweeps):
        v_start = v
        for c, ax in enumerate(axes):
            pos = np.searchsorted(ax, x[c])
            lo = ax[max(pos - 1, 0)]
            hi = ax[min(pos + 1, len(ax) - 1)]
            if hi <= lo:
                continue
            cands = [lo, hi]
            res = minimize_scalar(lambda t: -f(c, t, x), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-14 * max(1.0, hi)})
            cands.append(float(res.x))
            for t in cands:
                val = f(c, t, x)
                if val > v:
                    x[c], v = t, val
        if v - v_start <= 1e-15 * abs(v):
            break
    return x, v


@dataclass(frozen=True)
class RateCurve:
    """Optimised rate against ``n`` for several security levels."""

    n: np.ndarray
    asymptote: float
    series: dict = field(default_factory=dict)   # eps -> rates aligned with n

    @property
    def log10_n(self):
        return np.log10(self.n)


def rate_curve(p2, eps_list, beta, n_grid, clip=False) -> RateCurve:
    """Tabulate the optimised second-order rate for each ``eps``.

    By default the raw second-order expression is returned, which goes
    negative for small ``n``; ``clip=True`` floors the rates at zero.
    """
    a = coef_a(p2, beta)
    if a <= 0:
        raise ZeroRateError(f"zero-rate regime: A({p2}) = {a:.6g} <= 0")
    n = np.asarray(n_grid, dtype=float)
    if np.any(np.diff(n) <= 0):
        raise ValueError("n_grid must be strictly increasing")
    series = {}
    for eps in eps_list:
        rates = second_order_rate(a, coef_b(p2, eps), n)
        series[eps] = np.maximum(rates, 0.0) if clip else rates
    return RateCurve(n, a, series)
