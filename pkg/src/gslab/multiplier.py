"""Derivatives of the free propagator multiplier exp(-i t xi^2) in exact arithmetic.

d^a/dxi^a exp(-i t xi^2) = exp(-i t xi^2) P_a(xi) with a polynomial P_a whose
coefficients are Gaussian rationals.  Two independent constructions are
provided (closed form and the recurrence P_{a+1} = -2 i t xi P_a + P_a').
Inequalities at the irrational points xi_a = t^(-1/2) a^theta are decided
with mpmath interval arithmetic, so every verdict is certified: a bound
"holds" only if the intervals separate.
"""

from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

from mpmath import iv

from .errors import LabError, PreconditionError

MAX_ALPHA = 1000
DEFAULT_BITS = 256
MAX_BITS = 1024
# slack allowed on the 3/4 claim, as the absolute tolerance 1e-30
PARTIAL_SUM_TOL = Fraction(1, 10**30)


def _rational(v, what):
    """Exact Fraction from an int, Fraction or decimal literal."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        # 1.1 means 11/10, not the nearest binary double
        return Fraction(repr(v))
    if isinstance(v, str):
        return Fraction(v)
    raise LabError(f"{what} must be rational, got {v!r}")


@contextmanager
def _precision(bits):
    old = iv.prec
    iv.prec = bits
    try:
        yield
    finally:
        iv.prec = old


def _iv(q):
    q = Fraction(q)
    return iv.mpf(q.numerator) / iv.mpf(q.denominator)


# i^k as (re, im)
_I_POW = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class PalphaPoly:
    """P_alpha with coefficients coeffs[k] = (re, im) of xi^k, both Fractions."""

    alpha: int
    t: Fraction
    coeffs: tuple

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def nonzero_powers(self):
        return [k for k, (re, im) in enumerate(self.coeffs) if re or im]

    def parity_ok(self):
        return all((self.alpha - k) % 2 == 0 for k in self.nonzero_powers())

    def leading(self):
        return self.coeffs[-1]

    def evaluate(self, xi):
        """(Re, Im) of P_alpha(xi) as intervals; xi is an interval or rational."""
        x = xi if isinstance(xi, iv.mpf) else _iv(xi)
        re = iv.mpf(0)
        im = iv.mpf(0)
        for cr, ci in reversed(self.coeffs):
            re = re * x + _iv(cr)
            im = im * x + _iv(ci)
        return re, im

    def abs_at(self, xi):
        re, im = self.evaluate(xi)
        return iv.sqrt(re * re + im * im)


def _check_alpha(alpha):
    if not (isinstance(alpha, int) and 0 <= alpha <= MAX_ALPHA):
        raise LabError(f"alpha must be an integer in 0..{MAX_ALPHA}, got {alpha!r}")


def a_coefficient(m, alpha):
    """a_{m,alpha} = alpha! / (m! (alpha - 2m)!)."""
    return factorial(alpha) // (factorial(m) * factorial(alpha - 2 * m))


def p_alpha_direct(alpha, t):
    """Closed form (-2itxi)^a sum_m (-4it)^(-m) a_{m,a} xi^(-2m), expanded."""
    _check_alpha(alpha)
    t = _rational(t, "t")
    if t <= 0:
        raise LabError("t must be positive")
    coeffs = [(Fraction(0), Fraction(0))] * (alpha + 1)
    for m in range(alpha // 2 + 1):
        mag = (-2 * t) ** alpha / (-4 * t) ** m * a_coefficient(m, alpha)
        ur, ui = _I_POW[(alpha - m) % 4]
        coeffs[alpha - 2 * m] = (mag * ur, mag * ui)
    return PalphaPoly(alpha, t, tuple(coeffs))


def p_alpha_sequence(alpha_max, t):
    """[P_0, ..., P_alpha_max] from P_{a+1} = -2 i t xi P_a + d/dxi P_a."""
    _check_alpha(alpha_max)
    t = _rational(t, "t")
    if t <= 0:
        raise LabError("t must be positive")
    zero = (Fraction(0), Fraction(0))
    cur = [(Fraction(1), Fraction(0))]
    out = [PalphaPoly(0, t, tuple(cur))]
    for a in range(alpha_max):
        nxt = [zero] * (a + 2)
        for k, (re, im) in enumerate(cur):
            # -2it (re + i im) = 2t im - 2it re, shifted up one power
            r, i = nxt[k + 1]
            nxt[k + 1] = (r + 2 * t * im, i - 2 * t * re)
            if k:
                r, i = nxt[k - 1]
                nxt[k - 1] = (r + k * re, i + k * im)
        cur = nxt
        out.append(PalphaPoly(a + 1, t, tuple(cur)))
    return out


def p_alpha_recurrence(alpha, t):
    return p_alpha_sequence(alpha, t)[-1]


# ------------------------------------------------------------ weighted sums


def _theta_rational(theta):
    th = _rational(theta, "theta")
    if th <= 1:
        raise LabError(f"theta must exceed 1, got {theta}")
    return th


@dataclass(frozen=True)
class WeightedSeq:
    """b_m = a_{m,alpha} alpha^(-2 theta m), m = 0..floor(alpha/2).

    ``values`` are 256-bit intervals; ``strictly_decreasing`` is decided
    exactly by integer comparison of the ratio b_{m+1}/b_m with 1.
    """

    alpha: int
    theta: Fraction
    values: tuple

    @classmethod
    def build(cls, alpha, theta, bits=DEFAULT_BITS):
        th = _theta_rational(theta)
        _check_alpha(alpha)
        with _precision(bits):
            if alpha == 0:
                vals = (iv.mpf(1),)
            else:
                la = iv.log(iv.mpf(alpha))
                vals = tuple(a_coefficient(m, alpha) * iv.exp(-2 * _iv(th) * m * la)
                             for m in range(alpha // 2 + 1))
        return cls(alpha, th, vals)

    def ratio_below_one(self, m):
        """Exact test of b_{m+1} < b_m.

        Equivalent to (alpha-2m)(alpha-2m-1) < (m+1) alpha^(2 theta); with
        2 theta = p/q both sides are raised to the q-th power.
        """
        a = self.alpha
        lhs = (a - 2 * m) * (a - 2 * m - 1)
        two = 2 * self.theta
        p, q = two.numerator, two.denominator
        return lhs**q < (m + 1) ** q * a**p

    @property
    def strictly_decreasing(self):
        return all(self.ratio_below_one(m) for m in range(len(self.values) - 1))


@dataclass(frozen=True)
class PartialSumResult:
    alpha: int
    theta: Fraction
    value: object
    holds: bool
    bits: int

    def __iter__(self):
        return iter((self.value, self.holds))


def even_partial_sum(alpha, theta, bits=DEFAULT_BITS):
    """Interval value of sum over even m of (4i)^(-m) a_{m,alpha} alpha^(-2 theta m)."""
    seq = WeightedSeq.build(alpha, theta, bits)
    with _precision(bits):
        total = iv.mpf(0)
        for m in range(0, len(seq.values), 2):
            sign = 1 if m % 4 == 0 else -1
            total += sign * seq.values[m] / iv.mpf(4) ** m
    return total


def even_partial_sum_check(alpha, theta, bits=DEFAULT_BITS):
    """(value, holds) with holds certified as value >= 3/4 - 1e-30."""
    if alpha < 0:
        raise LabError("alpha must be nonnegative")
    th = _theta_rational(theta)
    while True:
        val = even_partial_sum(alpha, th, bits)
        with _precision(bits):
            verdict = val >= _iv(Fraction(3, 4) - PARTIAL_SUM_TOL)
        if verdict is not None or bits >= MAX_BITS:
            return PartialSumResult(alpha, th, val, bool(verdict), bits)
        bits *= 2


def even_partial_sum_exact(alpha, theta):
    """The same sum as an exact Fraction when alpha^(2 theta) is an integer power."""
    th = _theta_rational(theta)
    if (2 * th).denominator != 1:
        raise LabError("exact evaluation needs 2 theta integral")
    e = int(2 * th)
    total = Fraction(0)
    for m in range(0, alpha // 2 + 1, 2):
        sign = 1 if m % 4 == 0 else -1
        total += sign * Fraction(a_coefficient(m, alpha), 4**m * alpha ** (e * m))
    return total


# ----------------------------------------------------------- packet bounds


def xi_alpha(alpha, t, theta):
    """Interval t^(-1/2) alpha^theta (current iv precision)."""
    return iv.exp(_iv(theta) * iv.log(iv.mpf(alpha))) / iv.sqrt(_iv(t))


@dataclass(frozen=True)
class BoundVerdict:
    """Outcome of an interval comparison lhs >= rhs.

    ``holds`` is True or False when certified, None when inconclusive at
    the largest precision tried.
    """

    holds: object
    lhs: object
    rhs: object
    bits: int

    def __bool__(self):
        return self.holds is True

    @property
    def inconclusive(self):
        return self.holds is None


def packet_lower_bound(alpha, t, theta):
    """(3/4) (2 t^(1/2) exp(-(2/t)^(1/(2 theta))))^alpha alpha^(theta alpha)."""
    t_iv = _iv(t)
    th = _iv(theta)
    inner = 2 * iv.sqrt(t_iv) * iv.exp(-iv.exp(iv.log(2 / t_iv) / (2 * th)))
    return iv.mpf(3) / 4 * inner**alpha * iv.exp(th * alpha * iv.log(iv.mpf(alpha)))


def packet_lower_bound_check(alpha, t, theta, bits=DEFAULT_BITS, polys=None):
    """Certify |P_alpha(xi_alpha)| >= the packet lower bound.

    Requires xi_alpha >= 1.  ``polys`` may hold a precomputed P_alpha
    sequence for the same t.
    """
    t = _rational(t, "t")
    th = _theta_rational(theta)
    if alpha < 1:
        raise PreconditionError("alpha must be at least 1")
    # xi_alpha >= 1  <=>  alpha^(2 theta) >= t, decided exactly
    p, q = (2 * th).numerator, (2 * th).denominator
    if Fraction(alpha) ** p < t**q:
        raise PreconditionError(f"xi_alpha = t^(-1/2) alpha^theta < 1 for alpha={alpha}, t={t}")
    poly = polys[alpha] if polys is not None else p_alpha_direct(alpha, t)
    while True:
        with _precision(bits):
            lhs = poly.abs_at(xi_alpha(alpha, t, th))
            rhs = packet_lower_bound(alpha, t, th)
            verdict = lhs >= rhs
        if verdict is not None or bits >= MAX_BITS:
            return BoundVerdict(verdict, lhs, rhs, bits)
        bits *= 2


# --------------------------------------------------------------- violation


@dataclass(frozen=True)
class ViolationReport:
    theta: Fraction
    s: Fraction
    t: Fraction
    A: Fraction
    B: Fraction
    a: Fraction
    alpha_star: object
    lhs_lower: object
    rhs_upper: object
    precision_bits: int
    inconclusive: tuple = ()

    CSV_HEADER = ("theta", "s", "t", "A", "B", "a", "alpha_star", "lhs_lower",
                  "rhs_upper", "precision_bits")

    def csv_row(self):
        def num(v):
            return "" if v is None else str(v)
        return (str(self.theta), str(self.s), str(self.t), str(self.A), str(self.B),
                str(self.a), num(self.alpha_star), num(self.lhs_lower),
                num(self.rhs_upper), self.precision_bits)


def _violation_sides(poly, alpha, t, th, s, A, B, a):
    """Intervals for |P_a(xi_a)| f(xi_a) and A (2B)^a a!^s exp(-a <xi_a>^(1/theta))."""
    xi = xi_alpha(alpha, t, th)
    br = iv.exp(iv.log(iv.sqrt(1 + xi * xi)) / _iv(th))
    lhs = poly.abs_at(xi) * iv.exp(-br)
    rhs = (_iv(A) * (2 * _iv(B)) ** alpha
           * iv.exp(_iv(s) * iv.log(iv.mpf(factorial(alpha)))) * iv.exp(-_iv(a) * br))
    return lhs, rhs


def find_violation(theta, s, t, A=1, B=1, a=1, alpha_max=200, bits=DEFAULT_BITS):
    """Smallest alpha <= alpha_max at which the Gevrey-s multiplier bound provably fails.

    A point counts only when lhs > rhs is certified; points that stay
    undecided at MAX_BITS are listed in ``inconclusive`` and skipped.
    """
    th = _theta_rational(theta)
    s = _rational(s, "s")
    t = _rational(t, "t")
    A, B, a = (_rational(v, n) for v, n in ((A, "A"), (B, "B"), (a, "a")))
    if s < 1:
        raise PreconditionError("s must be at least 1")
    if s >= th:
        raise PreconditionError(f"s = {s} >= theta = {th}: no violation is predicted")
    if min(A, B, a, t) <= 0:
        raise LabError("A, B, a and t must be positive")
    undecided = []
    polys = p_alpha_sequence(alpha_max, t)
    for alpha in range(1, alpha_max + 1):
        poly = polys[alpha]
        prec = bits
        while True:
            with _precision(prec):
                lhs, rhs = _violation_sides(poly, alpha, t, th, s, A, B, a)
                verdict = lhs > rhs
            if verdict is not None or prec >= MAX_BITS:
                break
            prec *= 2
        if verdict is None:
            undecided.append(alpha)
        elif verdict:
            with _precision(prec):
                lo, hi = lhs.a, rhs.b
            return ViolationReport(th, s, t, A, B, a, alpha, lo, hi, prec, tuple(undecided))
    return ViolationReport(th, s, t, A, B, a, None, None, None, bits, tuple(undecided))
