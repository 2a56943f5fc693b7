from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import iv
from mpmath.libmp import to_rational

import gslab.multiplier as mult
from gslab.errors import LabError, PreconditionError
from gslab.multiplier import (PalphaPoly, WeightedSeq, a_coefficient, even_partial_sum_check,
                              even_partial_sum_exact, find_violation, p_alpha_direct,
                              p_alpha_recurrence, p_alpha_sequence, packet_lower_bound_check)

F = Fraction
THETAS = [F(11, 10), F(3, 2), F(2), F(3)]


def contains(box, q):
    lo, hi = (F(*to_rational(e)) for e in box._mpi_)
    return lo <= q <= hi


def as_complex(c):
    return complex(float(c[0]), float(c[1]))


def test_p_alpha_small_cases():
    assert p_alpha_direct(0, 1).coeffs == ((1, 0),)
    p1 = p_alpha_direct(1, F(2, 3))
    assert p1.coeffs == ((0, 0), (0, F(-4, 3)))
    p2 = p_alpha_direct(2, 1)
    assert p2.coeffs == ((0, -2), (0, 0), (-4, 0))


def test_p_alpha_direct_equals_recurrence_small():
    for t in (F(1), F(1, 3), F(1, 2), F(3, 7)):
        seq = p_alpha_sequence(30, t)
        for a in range(31):
            assert p_alpha_direct(a, t) == seq[a]
    assert p_alpha_direct(5, F(1, 3)) == p_alpha_recurrence(5, F(1, 3))


@pytest.mark.parametrize("t", [F(1), F(1, 2), F(3, 7)])
def test_p_alpha_direct_equals_recurrence_to_200(t):
    seq = p_alpha_sequence(200, t)
    assert all(p_alpha_direct(a, t) == seq[a] for a in range(201))


def test_leading_coefficient_and_parity():
    for t in (F(1), F(2, 5)):
        for a, poly in enumerate(p_alpha_sequence(50, t)):
            lead = (-2 * t) ** a
            re, im = mult._I_POW[a % 4]
            assert poly.leading() == (lead * re, lead * im)
            assert poly.degree == a
            assert poly.parity_ok()


@pytest.mark.parametrize("alpha", [1, 2, 5, 8])
def test_p_alpha_matches_derivative_of_chirp(alpha):
    # third route: d^alpha/dxi^alpha exp(-i t xi^2) = P_alpha(xi) exp(-i t xi^2)
    t = F(1, 2)
    poly = p_alpha_direct(alpha, t)
    with mp.workdps(40):
        for xi in (mp.mpf("0.3"), mp.mpf("1.7")):
            d = mp.diff(lambda y: mp.exp(-1j * mp.mpf(t.numerator) / t.denominator * y * y),
                        xi, alpha)
            ref = d / mp.exp(-1j * mp.mpf(1) / 2 * xi * xi)
            val = sum(as_complex(c) * float(xi) ** k for k, c in enumerate(poly.coeffs))
            assert abs(val - complex(ref)) <= 1e-9 * max(1.0, abs(complex(ref)))


def test_p_alpha_guards():
    with pytest.raises(LabError):
        p_alpha_direct(1001, 1)
    with pytest.raises(LabError):
        p_alpha_direct(3, 0)
    with pytest.raises(LabError):
        p_alpha_direct(-1, 1)


def test_interval_evaluation_contains_value():
    poly = p_alpha_direct(7, F(1, 3))
    xi = F(5, 4)
    exact = [sum(c[j] * xi**k for k, c in enumerate(poly.coeffs)) for j in (0, 1)]
    re, im = poly.evaluate(xi)
    assert contains(re, exact[0]) and contains(im, exact[1])


def test_a_coefficient_examples():
    assert a_coefficient(0, 4) == 1
    assert a_coefficient(1, 4) == 12
    assert a_coefficient(2, 4) == 12
    # the unweighted coefficients are not monotone
    assert a_coefficient(0, 4) < a_coefficient(1, 4)


def test_partial_sum_trivial_cases():
    for a in (0, 1):
        for th in THETAS:
            value, holds = even_partial_sum_check(a, th)
            assert contains(value, 1) and holds


def test_partial_sum_alpha4_theta2():
    exact = even_partial_sum_exact(4, 2)
    assert exact == 1 - F(12, 16 * 4**8) == F(262141, 262144)
    value, holds = even_partial_sum_check(4, 2)
    assert contains(value, exact)
    assert holds


@given(st.integers(0, 200), st.sampled_from([F(3, 2), F(2), F(3)]))
def test_partial_sum_interval_contains_exact(alpha, theta):
    exact = even_partial_sum_exact(alpha, theta)
    res = even_partial_sum_check(alpha, theta)
    assert contains(res.value, exact)
    assert res.holds == (exact >= F(3, 4) - mult.PARTIAL_SUM_TOL)


def test_weighted_sequence_example():
    seq = WeightedSeq.build(10, F(3, 2))
    assert seq.strictly_decreasing
    assert contains(seq.values[0], 1)
    with mp.workprec(256):
        for m in range(5):
            assert seq.values[m + 1].b < seq.values[m].a


@given(st.integers(2, 100), st.sampled_from(THETAS))
def test_weighted_sequence_decreasing(alpha, theta):
    seq = WeightedSeq.build(alpha, theta)
    assert seq.strictly_decreasing
    assert all(v.a > 0 for v in seq.values)


def test_weighted_exact_comparison_agrees_with_fractions():
    # 2 theta = 4: b_m = a_{m,alpha} / alpha^(4m) exactly
    for alpha in range(2, 40):
        seq = WeightedSeq.build(alpha, 2)
        for m in range(alpha // 2):
            lhs = F(a_coefficient(m + 1, alpha), alpha ** (4 * (m + 1)))
            rhs = F(a_coefficient(m, alpha), alpha ** (4 * m))
            assert seq.ratio_below_one(m) == (lhs < rhs)


def test_packet_bound_examples():
    v = packet_lower_bound_check(1, 1, 2)
    assert v.holds is True
    assert float(v.rhs.a) == pytest.approx(1.5 * float(mp.exp(-mp.mpf(2) ** 0.25)), rel=1e-12)
    assert contains(v.lhs, 2)
    v10 = packet_lower_bound_check(10, 1, 2)
    assert v10 and v10.lhs.a > v10.rhs.b
    assert packet_lower_bound_check(40, F(1, 4), F(3, 2))


def test_packet_bound_precondition():
    with pytest.raises(PreconditionError):
        packet_lower_bound_check(1, 4, 2)
    with pytest.raises(PreconditionError):
        packet_lower_bound_check(0, 1, 2)


@pytest.mark.parametrize("t", [F(1), F(1, 2), F(1, 4)])
@pytest.mark.parametrize("theta", [F(3, 2), F(2), F(3)])
def test_packet_bound_up_to_100(t, theta):
    polys = p_alpha_sequence(100, t)
    for a in range(1, 101):
        assert packet_lower_bound_check(a, t, theta, polys=polys).holds is True


def test_find_violation_reference_case():
    rep = find_violation(2, 1, 1)
    assert rep.alpha_star is not None and rep.alpha_star < 200
    assert rep.lhs_lower > rep.rhs_upper
    assert find_violation(2, 1, 1, bits=512).alpha_star == rep.alpha_star
    assert len(rep.csv_row()) == len(mult.ViolationReport.CSV_HEADER)


def test_find_violation_monotone_in_A():
    base = find_violation(2, 1, 1).alpha_star
    assert find_violation(2, 1, 1, A=10).alpha_star >= base


def test_find_violation_rejects_s_ge_theta():
    with pytest.raises(PreconditionError, match="no violation"):
        find_violation(2, 2, 1)
    with pytest.raises(PreconditionError):
        find_violation(2, F(1, 2), 1)


def test_certified_comparisons_are_three_valued():
    with mp.workprec(64):
        x = iv.mpf([1, 2])
        assert (x > iv.mpf(0)) is True
        assert (x > iv.mpf(3)) is False
        assert (x > iv.mpf(1.5)) is None


def test_decimal_inputs_parsed_exactly():
    assert mult._rational(1.1, "theta") == F(11, 10)
    assert mult._rational(F(3, 7), "t") == F(3, 7)
