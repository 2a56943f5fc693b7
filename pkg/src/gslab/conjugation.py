"""Exponential conjugation of a 1D Schrodinger-type spatial operator.

For A = d_x^2 + a(t,x) D_x + b(t,x) and the weight w(x) = <x>^(1/s),

    exp(delta w) A exp(-delta w) = d_x^2 + a_delta D_x + b_delta,
    a_delta = a - 2i delta w',
    b_delta = b - delta w'' + delta^2 w'^2 - delta a D_x w,

with D_x = -i d_x.  The identity is exact, so its discrete residual measures
only the spectral discretisation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import LabError, PreconditionError, WeightOverflowError
from .grid import Field, l2_norm, spectral_derivative, transform
from .gs_spaces import OVERFLOW_EXP, bracket_power


def bracket_weight_derivatives(x, s, order):
    """<x>^(1/s) and its first or second derivative."""
    if s < 1:
        raise LabError(f"s must be at least 1, got {s}")
    r = 1.0 / s
    x = np.asarray(x, dtype=float)
    if order == 0:
        return bracket_power(x, r)
    if order == 1:
        return r * x * bracket_power(x, r - 2)
    if order == 2:
        return r * bracket_power(x, r - 2) + r * (r - 2) * x**2 * bracket_power(x, r - 4)
    raise LabError(f"order must be 0, 1 or 2, got {order}")


@dataclass(frozen=True)
class CoefficientSpec:
    """Coefficients a(t, x), b(t, x) of the first- and zeroth-order terms.

    ``a`` and ``b`` are vectorised callables.  ``sigma`` and ``bound_C``
    declare the decay |Im a| <= bound_C <x>^(-sigma); ``theta0`` and
    ``bound_A`` the Gevrey bounds (recorded, not checked).
    """

    a: object
    b: object
    theta0: float = 1.5
    sigma: float = 0.5
    bound_C: float = 1.0
    bound_A: float = 1.0

    def __post_init__(self):
        if not self.theta0 > 1:
            raise LabError("theta0 must exceed 1")
        if not 0 < self.sigma < 1:
            raise LabError("sigma must lie in (0, 1)")
        if self.bound_C <= 0 or self.bound_A <= 0:
            raise LabError("bound constants must be positive")

    def check_decay(self, grid, t=0.0, rtol=1e-12):
        """Verify |Im a(t, x_i)| <= C <x_i>^(-sigma) on the grid."""
        ia = np.abs(np.imag(self.a(t, grid.x)))
        bound = self.bound_C * bracket_power(grid.x, -self.sigma)
        bad = np.flatnonzero(ia > bound * (1 + rtol))
        if bad.size:
            i = bad[0]
            raise PreconditionError(
                f"|Im a| = {ia[i]:.6g} exceeds {bound[i]:.6g} at x = {grid.x[i]:.6g}")


@dataclass(frozen=True, eq=False)
class ConjugatedCoefficients:
    delta: float
    s: float
    a_delta: Field
    b_delta: Field
    t: float
    a: Field


def conjugate_coefficients(spec, delta, s, t, grid):
    """Sample a_delta and b_delta at time t on ``grid``."""
    if not delta > 0:
        raise LabError("delta must be positive")
    if s < 1:
        raise LabError("s must be at least 1")
    spec.check_decay(grid, t)
    x = grid.x
    a = np.asarray(spec.a(t, x), dtype=complex) * np.ones_like(x)
    b = np.asarray(spec.b(t, x), dtype=complex) * np.ones_like(x)
    w1 = bracket_weight_derivatives(x, s, 1)
    w2 = bracket_weight_derivatives(x, s, 2)
    a_delta = a - 2j * delta * w1
    b_delta = b - delta * w2 + delta**2 * w1**2 - delta * a * (-1j * w1)
    return ConjugatedCoefficients(delta, s, Field(grid, a_delta), Field(grid, b_delta),
                                  t, Field(grid, a))


@dataclass(frozen=True)
class ImagDecayReport:
    """Power-law fit |Im a_delta| ~ C <x>^(-q) against the bound exponent."""

    sigma: float
    s: float
    delta: float
    fitted_q: float
    bound_q: float
    residual: float
    amplitude: float
    window: tuple
    holds: bool
    vacuous: bool = False

    CSV_HEADER = ("sigma", "s", "delta", "fitted_q", "bound_q", "residual")

    def csv_row(self):
        return (self.sigma, self.s, self.delta, self.fitted_q, self.bound_q,
                self.residual)


def verify_imag_decay(cc, sigma, slack=0.05):
    """Fit the decay of |Im a_delta| over |x| in [L/8, 3L/4]."""
    g = cc.a_delta.grid
    lo, hi = g.half_length / 8, 0.75 * g.half_length
    r = np.abs(g.x)
    win = (r >= lo) & (r <= hi)
    if np.count_nonzero(win) < 32:
        raise PreconditionError(
            f"fit window [{lo:g}, {hi:g}] has {np.count_nonzero(win)} points; need 32")
    bound_q = min(sigma, 1.0 - 1.0 / cc.s)
    im = np.abs(cc.a_delta.values.imag)
    use = win & (im > 1e-300)
    if not use.any():
        return ImagDecayReport(sigma, cc.s, cc.delta, np.inf, bound_q, 0.0, 0.0,
                               (lo, hi), True, vacuous=True)
    X = np.log(bracket_power(r[use], 1.0))
    Y = np.log(im[use])
    A = np.column_stack([np.ones_like(X), -X])
    (logc, q), *_ = np.linalg.lstsq(A, Y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [logc, q] - Y) ** 2)))
    return ImagDecayReport(sigma, cc.s, cc.delta, float(q), bound_q, rms,
                           float(np.exp(logc)), (lo, hi), bool(q >= bound_q - slack))


def _apply_spatial(v, a, b):
    """(d_x^2 + a D_x + b) v with D_x = -i d_x."""
    d1 = spectral_derivative(v, 1).values
    d2 = spectral_derivative(v, 2).values
    return Field(v.grid, d2 + a * (-1j * d1) + b * v.values)


def conjugation_residual(spec, delta, s, u, t=0.0, corrected=True):
    """Relative L2 defect of exp(dw) A = A_delta exp(dw) on the field u.

    With ``corrected=False`` the unconjugated A stands in for A_delta, which
    measures the size of the correction terms themselves (O(delta)).
    """
    g = u.grid
    if not np.any(u.values):
        return 0.0
    w = delta * bracket_weight_derivatives(g.x, s, 0)
    with np.errstate(divide="ignore"):
        logmag = w + np.log(np.abs(u.values))
    top = float(np.max(logmag))
    if top >= OVERFLOW_EXP:
        raise WeightOverflowError(
            f"weight exp(delta <x>^(1/s)) u overflows (exponent {top:.6g})", top)
    spec_u = np.abs(transform(u).coefficients)
    top_octave = spec_u[np.abs(g.frequencies) >= 0.5 * g.xi_max].max()
    if top_octave > 1e-10 * spec_u.max():
        raise PreconditionError("u is not band-limited (top octave above 1e-10 of max)")
    cc = conjugate_coefficients(spec, delta, s, t, g)
    a = cc.a.values
    b = np.asarray(spec.b(t, g.x), dtype=complex) * np.ones(g.num_points)
    ew = np.exp(w)
    v = Field(g, ew * u.values)
    if corrected:
        lhs = _apply_spatial(v, cc.a_delta.values, cc.b_delta.values)
    else:
        lhs = _apply_spatial(v, a, b)
    rhs = Field(g, ew * _apply_spatial(u, a, b).values)
    return l2_norm(lhs - rhs) / l2_norm(v)
