import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bb84rate.mathcore import binary_entropy, coef_a, coef_b
from bb84rate.rate_engine import (
    InconclusiveEstimateError,
    RateParams,
    Ratios,
    UnestimableSideError,
    ZeroRateError,
    allocate,
    averaged_key_length,
    finite_key_length,
    max_key_length,
    numeric_optimize,
    optimal_ratios,
    rate_curve,
    sacrificed_length_bit_side,
    sacrificed_length_phase_side,
    verification_length,
)

from oracles import a_coef, b_coef, delta_ref, entropy_bits

BETA = 0.642243
EPS_LIST = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10)


def params(n, p1=0.05, p2=0.05, eps=1e-2, beta=BETA):
    return RateParams(p1, p2, eps, beta, n)


# --- integer bookkeeping -------------------------------------------------

def test_verification_length():
    assert verification_length(10 ** 6) == 20
    assert verification_length(2 ** 16) == 16
    assert verification_length(1) == 0


def test_allocate_rounding_and_minimum():
    assert allocate(100, 100, 0.1, 0.1) == allocate(100, 100, 0.1, 0.1)
    a = allocate(100, 50, 0.1, 0.5)
    assert (a.key1, a.check1, a.key2, a.check2) == (90, 10, 25, 25)
    # r1 * n1 rounds to 0 but phase keys need a bit-basis sample
    a = allocate(3, 50, 0.1, 0.5)
    assert a.check1 == 1
    a = allocate(10, 0, 0.0, 1.0)
    assert (a.key1, a.check2) == (10, 0)


# --- sacrificed lengths --------------------------------------------------

def test_sacrificed_bit_side_example():
    d = delta_ref(0.05, 1e-2, 1e6, 1e4)
    assert d == pytest.approx(8.146e-3, abs=1e-6)
    # frozen from the oracle: ceil(1e6 * h(0.05 + d))
    assert math.ceil(1e6 * entropy_bits(0.05 + d)) == 320041
    assert sacrificed_length_bit_side(10 ** 6, 10 ** 4, 0.0, 1.0, 0.05, 1e-2) == 320041


def test_sacrificed_phase_side_example():
    assert sacrificed_length_phase_side(10 ** 5, 10 ** 5, 0.1, 0.1, 0.03, 1e-2) == 20421
    assert sacrificed_length_phase_side(10 ** 5, 10 ** 4, 0.1, 1.0, 0.03, 1e-2) == 0


def test_sacrificed_large_sample_limit():
    n = 10 ** 12
    m = sacrificed_length_bit_side(n, n, 0.0, 1.0, 0.05, 1e-2)
    assert m / n == pytest.approx(binary_entropy(0.05), rel=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 10 ** 7), st.integers(10, 10 ** 7), st.floats(0.01, 0.99),
       st.floats(0.01, 0.99), st.floats(0.001, 0.2))
def test_sacrificed_swap_symmetry(n1, n2, r1, r2, p):
    def outcome(fn, *args):
        try:
            return fn(*args)
        except ValueError as exc:
            return type(exc)

    bit = outcome(sacrificed_length_bit_side, n1, n2, r1, r2, p, 1e-3)
    phase = outcome(sacrificed_length_phase_side, n2, n1, r2, r1, p, 1e-3)
    assert bit == phase


def test_sacrificed_errors():
    with pytest.raises(UnestimableSideError):
        sacrificed_length_bit_side(1000, 1000, 0.0, 0.0, 0.05, 1e-2)
    with pytest.raises(InconclusiveEstimateError):
        sacrificed_length_bit_side(1000, 1, 0.0, 1.0, 0.45, 1e-2)


# --- finite key length ---------------------------------------------------

def test_finite_single_sided_example():
    n, r0 = 10 ** 6, 0.022
    n1, n2 = round(n * (1 - r0) ** 2), round(n * r0 ** 2)
    ratios = Ratios(r0, 0.0, 1.0)
    rep = finite_key_length(n1, n2, ratios, None, 0.05, 1e-2, BETA, n)
    m1 = math.ceil(n1 * entropy_bits(0.05 + delta_ref(0.05, 1e-2, n1, n2)))
    assert rep.sacrificed1 == m1
    assert rep.sacrificed2 == 0 and rep.length_phase_side == 0
    assert rep.total == math.floor(BETA * n1) - m1 - 20
    # second-order expansion of the same quantity
    a, b = a_coef(0.05, BETA), b_coef(0.05, 1e-2)
    expansion = a * n1 - b * math.sqrt((n1 + n2) * n1 / n2) - 20
    # h is concave, so the linearised sacrifice overestimates; the excess is
    # bounded by the quadratic Taylor term k |h''(p)| delta^2 (doubled) plus rounding.
    d = delta_ref(0.05, 1e-2, n1, n2)
    curvature = 1 / (0.05 * 0.95 * math.log(2))
    assert 0 <= rep.total - expansion + 2 <= n1 * curvature * d ** 2 + 2


def test_finite_floor_at_zero():
    rep = finite_key_length(10 ** 5, 10 ** 4, Ratios(0.1), None, 0.1, 1e-2, 0.4, 10 ** 6)
    assert 0.4 <= binary_entropy(0.1 + 0.0)
    assert rep.length_bit_side == 0 and rep.total == 0


def test_finite_doubling():
    ratios = Ratios(0.05)
    n = 10 ** 7
    one = finite_key_length(round(n * 0.95 ** 2), round(n * 0.05 ** 2), ratios, None, 0.05, 1e-2,
                            BETA, n).total
    two = finite_key_length(round(2 * n * 0.95 ** 2), round(2 * n * 0.05 ** 2), ratios, None, 0.05,
                            1e-2, BETA, 2 * n).total
    # the sublinear correction shrinks relatively, so the ratio sits just above 2
    assert 2.0 < two / one < 2.1


def test_finite_two_sided_totals():
    rep = finite_key_length(10 ** 5, 10 ** 5, Ratios(0.5, 0.2, 0.2), 0.03, 0.04, 1e-2, 0.8, 10 ** 6)
    assert rep.total == rep.length_bit_side + rep.length_phase_side
    assert rep.length_bit_side > 0 and rep.length_phase_side > 0


def test_finite_matches_averaged_within_sqrt_n_log_n():
    c = 0.25
    for ratios_of in (lambda p: optimal_ratios(p).ratios, lambda p: Ratios(0.1)):
        for e in range(5, 10):
            n = 10 ** e
            p = params(n)
            r = ratios_of(p)
            n1, n2 = round(n * (1 - r.r0) ** 2), round(n * r.r0 ** 2)
            fin = finite_key_length(n1, n2, r, 0.05, 0.05, 1e-2, BETA, n).total
            avg = averaged_key_length(p, r)
            assert abs(fin - avg) <= c * math.sqrt(n) * math.log(n)


# --- averaged key length -------------------------------------------------

def test_averaged_single_sided_reduction():
    p = params(1e8)
    r0 = 0.03
    a, b = coef_a(0.05, BETA), coef_b(0.05, 1e-2)
    expected = 1e8 * a * (1 - r0) ** 2 - 1e4 * b * (1 - r0) * math.sqrt((1 - r0) ** 2 + r0 ** 2) / r0
    assert averaged_key_length(p, Ratios(r0, 0.0, 1.0)) == pytest.approx(expected, rel=1e-13)


def test_averaged_symmetric_allocation_fixture():
    # frozen from the oracle coefficients
    assert averaged_key_length(params(1e6), Ratios(0.5, 0.5, 0.5)) == pytest.approx(
        85518.39193722593, rel=1e-8)


def test_averaged_first_order_limit():
    r = Ratios(0.2, 0.1, 0.3)
    p1, p2 = 0.04, 0.06
    a_bit, a_phase = coef_a(p2, BETA), coef_a(p1, BETA)
    limit = a_bit * 0.8 ** 2 * 0.9 + a_phase * 0.2 ** 2 * 0.7
    prev = None
    for e in (8, 12, 16, 20):
        v = averaged_key_length(params(10.0 ** e, p1, p2), r) / 10.0 ** e
        if prev is not None:
            assert abs(v - limit) < abs(prev - limit)
        prev = v
    assert prev == pytest.approx(limit, rel=1e-7)


def test_averaged_degenerate_convention():
    # No bit-side keys (r1 = 1), so r2 = 0 must not be read as a denominator.
    v = averaged_key_length(params(1e8), Ratios(0.4, 1.0, 0.0))
    assert math.isfinite(v) and v > 0
    with pytest.raises(UnestimableSideError):
        averaged_key_length(params(1e8), Ratios(0.4, 0.0, 0.0))


# --- analytic optimum ----------------------------------------------------

def test_optimal_ratios_example(reference_params):
    choice = optimal_ratios(reference_params)
    assert choice.ratios.r0 == pytest.approx(0.021995, abs=1e-6)
    assert (choice.ratios.r1, choice.ratios.r2) == (0.0, 1.0)
    assert not choice.clamped and not choice.swapped
    oracle = math.sqrt(b_coef(0.05, 1e-2) / (2 * a_coef(0.05, BETA))) * 1e-2
    assert choice.ratios.r0 == pytest.approx(oracle, rel=1e-9)


def test_optimal_ratios_vanish():
    r0s = [optimal_ratios(params(10.0 ** e)).ratios.r0 for e in range(6, 20, 2)]
    assert all(a > b for a, b in zip(r0s, r0s[1:]))
    assert r0s[-1] < 1e-4


def test_optimal_ratios_clamp_and_swap():
    choice = optimal_ratios(params(100))
    assert choice.clamped and choice.ratios.r0 == 0.5
    swapped = optimal_ratios(params(1e8, p1=0.03, p2=0.05))
    assert swapped.swapped
    direct = optimal_ratios(params(1e8, p1=0.05, p2=0.03))
    assert swapped.ratios.r0 == pytest.approx(1 - direct.ratios.r0)
    assert (swapped.ratios.r1, swapped.ratios.r2) == (1.0, 0.0)


def test_zero_rate():
    with pytest.raises(ZeroRateError):
        optimal_ratios(params(1e8, beta=binary_entropy(0.05)))
    with pytest.raises(ZeroRateError):
        max_key_length(params(1e8, beta=0.2))


def test_max_key_length_example():
    p = params(1e10)
    a, b = a_coef(0.05, BETA), b_coef(0.05, 1e-2)
    oracle_rate = a * (1 - 2 * 10 ** -2.5 * math.sqrt(2 * b / a))
    assert max_key_length(p) / 1e10 == pytest.approx(oracle_rate, abs=1e-9)
    assert max_key_length(p) / 1e10 == pytest.approx(0.34595, abs=1e-5)


def test_max_key_length_small_b():
    p = params(1e8, eps=0.70710)
    assert max_key_length(p) == pytest.approx(1e8 * coef_a(0.05, BETA), rel=1e-3)


def test_max_key_length_gap_shrinks():
    ratios = []
    for e in (8, 10, 12):
        p = params(10.0 ** e)
        gap = averaged_key_length(p, optimal_ratios(p).ratios) - max_key_length(p)
        ratios.append(abs(gap) / 10.0 ** (0.75 * e))
    assert ratios[0] > ratios[1] > ratios[2]
    per_n = [abs(averaged_key_length(params(10.0 ** e), optimal_ratios(params(10.0 ** e)).ratios)
                 - max_key_length(params(10.0 ** e))) / 10.0 ** e for e in (8, 10, 12, 14)]
    assert all(a > b for a, b in zip(per_n, per_n[1:]))


# --- numerical oracle ----------------------------------------------------

@pytest.mark.parametrize("n", [1e6, 1e8, 1e10])
def test_numeric_dominates_analytic(n):
    p = params(n)
    r, v = numeric_optimize(p)
    analytic = averaged_key_length(p, optimal_ratios(p).ratios)
    assert v >= analytic
    assert averaged_key_length(p, r) == pytest.approx(v, rel=1e-12)


def test_numeric_agrees_at_large_n():
    p = params(1e10)
    r, v = numeric_optimize(p)
    a = optimal_ratios(p).ratios
    assert (v - averaged_key_length(p, a)) / v <= 1e-3
    assert abs(r.r0 - a.r0) / a.r0 <= 0.2
    assert r.r1 <= 0.01 and r.r2 >= 0.99


def test_numeric_clamped_regime():
    p = params(200)
    choice = optimal_ratios(p)
    assert choice.clamped
    _, v = numeric_optimize(p)
    assert v >= averaged_key_length(p, choice.ratios)


def test_numeric_deterministic():
    p = params(1e9, p1=0.04)
    assert numeric_optimize(p) == numeric_optimize(p)


@pytest.mark.parametrize("p1,p2", [(0.03, 0.05), (0.02, 0.04), (0.05, 0.05)])
def test_numeric_swap_invariance(p1, p2):
    p = params(1e8, p1, p2)
    r, v = numeric_optimize(p)
    rs, vs = numeric_optimize(p.swapped())
    assert vs == pytest.approx(v, rel=1e-6)
    if p1 != p2:
        assert rs.r0 == pytest.approx(1 - r.r0, rel=1e-3)
    else:
        # mirror-image ties resolve to the bit-basis orientation
        assert r.r0 < 0.5 and rs.r0 < 0.5


# --- rate curve ----------------------------------------------------------

def test_rate_curve_properties():
    n_grid = 10.0 ** np.linspace(4, 12, 81)
    curve = rate_curve(0.05, EPS_LIST, BETA, n_grid)
    assert curve.asymptote == pytest.approx(0.355846, abs=1e-6)
    rates = np.array([curve.series[e] for e in EPS_LIST])
    assert np.all(np.diff(rates, axis=1) > 0)
    assert np.all(rates[:-1] > rates[1:])
    assert np.all(rates < curve.asymptote)
    i = int(np.argmin(abs(np.log10(n_grid) - 10)))
    assert curve.series[1e-2][i] == pytest.approx(0.34595, abs=1e-5)


def test_rate_curve_matches_max_key_length():
    n_grid = [1e6, 1e9, 1e12]
    curve = rate_curve(0.05, [1e-6], BETA, n_grid)
    for n, rate in zip(n_grid, curve.series[1e-6]):
        assert rate == pytest.approx(max_key_length(params(n, eps=1e-6)) / n, rel=1e-12)


def test_rate_curve_clip():
    curve = rate_curve(0.05, [1e-10], BETA, [1e4, 1e12], clip=True)
    assert curve.series[1e-10][0] == 0.0
    assert 0 < curve.series[1e-10][1] <= curve.asymptote
    with pytest.raises(ValueError):
        rate_curve(0.05, [1e-2], BETA, [1e5, 1e4])
    with pytest.raises(ZeroRateError):
        rate_curve(0.05, [1e-2], 0.2, [1e5])


def test_rate_params_validation():
    for bad in [dict(p1=0.5), dict(p2=0.0), dict(eps=0.8), dict(beta=1.2), dict(n=0)]:
        kw = dict(p1=0.05, p2=0.05, eps=1e-2, beta=BETA, n=1e6)
        kw.update(bad)
        with pytest.raises(ValueError):
            RateParams(**kw)
    with pytest.raises(ValueError):
        Ratios(1.5)
