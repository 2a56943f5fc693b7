"""Gelfand-Shilov weights, the weighted L2 norm, and decay/regularity fits."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, LabError, WeightOverflowError, ResolutionError
from .grid import Spectrum, inverse_transform, transform

OVERFLOW_EXP = 700.0
MIN_FIT_POINTS = 16


def bracket_power(x, p):
    """Japanese bracket power (1 + x^2)^(p/2)."""
    return np.power(1.0 + np.square(x), 0.5 * p)


@dataclass(frozen=True)
class GSParams:
    theta: float
    s: float
    rho1: float = 0.0
    rho2: float = 0.0

    def __post_init__(self):
        if not self.theta > 1:
            raise LabError(f"theta must exceed 1, got {self.theta}")
        if not self.s >= 1:
            raise LabError(f"s must be at least 1, got {self.s}")
        if self.rho1 < 0 or self.rho2 < 0:
            raise LabError("rho1 and rho2 must be nonnegative")


def _safe_log_abs(z):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(z))


def gs_sobolev_norm(u, p, threshold=OVERFLOW_EXP):
    """Discrete norm || exp(rho2 <x>^(1/s)) exp(rho1 <D>^(1/theta)) u ||_L2.

    The frequency weight is applied first.  Both weights are handled in log
    space; if any weighted modulus would exceed exp(threshold) a
    ``WeightOverflowError`` reports the largest exponent.
    """
    g = u.grid
    if not np.any(u.values):
        return 0.0
    s = transform(u)
    w1 = p.rho1 * bracket_power(g.frequencies, 1.0 / p.theta)
    log_c = w1 + _safe_log_abs(s.coefficients)
    top = float(np.max(log_c))
    if top >= threshold:
        raise WeightOverflowError(
            f"frequency weight overflows: max exponent {top:.6g} >= {threshold}", top)
    v = inverse_transform(Spectrum(g, s.coefficients * np.exp(w1))).values
    log_v = p.rho2 * bracket_power(g.x, 1.0 / p.s) + _safe_log_abs(v)
    top = float(np.max(log_v))
    if top >= threshold:
        raise WeightOverflowError(
            f"spatial weight overflows: max exponent {top:.6g} >= {threshold}", top)
    if top == -np.inf:
        return 0.0
    scaled = np.exp(log_v - top)
    return float(np.exp(top) * np.sqrt(g.spacing) * np.linalg.norm(scaled))


@dataclass(frozen=True)
class DecayFit:
    """|f(x)| ~ amplitude |x|^(-power) exp(-rate |x|^inverse_order) on ``window``."""

    inverse_order: float
    rate: float
    amplitude: float
    residual: float
    window: tuple
    power: float = 0.0

    CSV_HEADER = ("window_lo", "window_hi", "inverse_order", "rate",
                  "amplitude", "residual")

    def csv_row(self):
        return (self.window[0], self.window[1], self.inverse_order, self.rate,
                self.amplitude, self.residual)


def fit_stretched_exp(r, logf, q_range=(0.05, 3.0), prefactor=True):
    """Fit logf = a - kappa log r - c r^q.

    Returns ``(q, c, a, kappa, rms)``; with ``prefactor=False`` kappa is held
    at 0.  The exponent q is located by a grid scan (linear least squares for
    the other coefficients at each q) and then polished by a nonlinear solve.
    ``rms`` is measured in the (log r, log(-log(|f|/C))) plane, C including
    the fitted algebraic prefactor.
    """
    r = np.asarray(r, dtype=float)
    logf = np.asarray(logf, dtype=float)
    logr = np.log(r)
    cols = [np.ones_like(r)] + ([-logr] if prefactor else [])
    best = None
    for q in np.linspace(q_range[0], q_range[1], 1200):
        A = np.column_stack(cols + [-r ** q])
        coef, *_ = np.linalg.lstsq(A, logf, rcond=None)
        sse = float(np.sum((A @ coef - logf) ** 2))
        if best is None or sse < best[0]:
            best = (sse, q, coef)
    _, q0, coef0 = best
    scale = max(1.0, float(np.max(np.abs(logf))))

    def model(v):
        a, kappa, c, q = v if prefactor else (v[0], 0.0, v[1], v[2])
        return a - kappa * logr - c * r ** q

    lo = [-np.inf] * (len(coef0)) + [q_range[0] / 2]
    hi = [np.inf] * (len(coef0)) + [2 * q_range[1]]
    sol = least_squares(lambda v: (model(v) - logf) / scale,
                        x0=list(coef0) + [q0], bounds=(lo, hi),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    v = [float(t) for t in sol.x]
    a, kappa, c, q = v if prefactor else (v[0], 0.0, v[1], v[2])
    gap = a - kappa * logr - logf
    ok = gap > 0
    if c > 0 and np.count_nonzero(ok) >= 2:
        dev = np.log(gap[ok]) - (np.log(c) + q * logr[ok])
        rms = float(np.sqrt(np.mean(dev ** 2)))
    else:
        rms = float("inf")
    return q, c, a, kappa, rms


def decay_window(u, floor=1e-14, center=0.0, ratio=0.25):
    """Automatic |x| window for ``fit_decay_exponent``.

    The upper end is the first distance from ``center`` beyond the peak at
    which |u| drops below ``floor`` times its maximum, capped at 3L/4 to stay
    clear of the periodic wrap; the lower end is ``ratio`` times that.
    """
    g = u.grid
    r = np.abs(g.x - center)
    mod = np.abs(u.values)
    top = mod.max()
    cap = 0.75 * g.half_length
    if top == 0:
        raise FitError("zero field has no decay window")
    peak = r[np.argmax(mod)]
    low = (mod < floor * top) & (r > peak)
    hi = min(cap, float(r[low].min())) if low.any() else cap
    return (ratio * hi, hi)


def fit_decay_exponent(u, window=None, center=0.0, prefactor=True):
    """Fit |u(x)| ~ C |x|^(-kappa) exp(-c |x|^q), |x| measured from ``center``.

    ``window`` is an interval of |x - center| and defaults to
    ``decay_window(u)``.  The returned ``inverse_order`` is q (1/r for
    e^{-c|x|^{1/r}} decay).  The algebraic factor keeps slowly varying
    prefactors from biasing q; pass ``prefactor=False`` for the bare model.
    """
    g = u.grid
    if window is None:
        window = decay_window(u, center=center)
    lo, hi = float(window[0]), float(window[1])
    if not 0 <= lo < hi:
        raise LabError(f"invalid window {window}")
    if hi > 0.75 * g.half_length * (1 + 1e-12):
        raise LabError(
            f"window upper end {hi} enters the boundary quarter (> {0.75 * g.half_length})")
    r = np.abs(g.x - center)
    mod = np.abs(u.values)
    mask = (r >= lo) & (r <= hi) & (mod > 1e-300) & (r > 0)
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        raise FitError(
            f"only {np.count_nonzero(mask)} usable points in window {window}; "
            f"need {MIN_FIT_POINTS}")
    q, c, a, kappa, rms = fit_stretched_exp(r[mask], np.log(mod[mask]),
                                            prefactor=prefactor)
    return DecayFit(q, c, float(np.exp(a)), rms, (lo, hi), kappa)


def estimate_gevrey_order(u, upper=1e-2, lower=1e-13):
    """Gevrey order read off the spectrum, |u_hat| ~ exp(-c <xi>^(1/theta)).

    The fit uses modes with ``lower < |u_hat|/max < upper``; it requires the
    spectrum to be below 1e-12 of its maximum over the whole top octave.
    """
    g = u.grid
    s = transform(u)
    mod = np.abs(s.coefficients)
    top = mod.max()
    if top == 0:
        raise ResolutionError("zero spectrum")
    rel = mod / top
    absxi = np.abs(g.frequencies)
    tail = rel[absxi >= 0.5 * g.xi_max]
    if tail.max() > 1e-12:
        raise ResolutionError(
            f"spectrum not decaying: {tail.max():.3e} of max in the top octave")
    mask = (rel < upper) & (rel > lower)
    if np.count_nonzero(mask) < MIN_FIT_POINTS:
        raise FitError("too few modes in the decaying range")
    q, *_ = fit_stretched_exp(bracket_power(absxi[mask], 1.0),
                              np.log(mod[mask]), q_range=(0.02, 2.0),
                              prefactor=False)
    return 1.0 / q
