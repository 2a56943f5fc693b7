"""Periodic 1D grid, discrete Fourier transform and spectral operators.

The transform pair is normalised as a Riemann sum of the continuous one,

    u_hat(xi_j) = dx * sum_i exp(-i xi_j x_i) u(x_i)
    u(x_i)      = 1/(2L) * sum_j exp(i xi_j x_i) u_hat(xi_j)

on x_i = -L + i dx, xi_j = pi j / L.  Because x_0 = -L, the kernel
exp(-i xi_j x_i) equals (-1)^j times the plain FFT kernel, so both directions
are a single FFT plus a sign flip.  Coefficients are stored in FFT order
(j = 0, 1, ..., N/2-1, -N/2, ..., -1) and ``GridSpec.frequencies`` follows
the same order.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridError

_WORKERS = 1

NYQUIST_TOL = 1e-10


class NyquistWarning(UserWarning):
    """Spectrum carries non-negligible weight at the unpaired Nyquist mode."""


def set_workers(n):
    """Set the thread count used by every FFT in the package."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_workers():
    return _WORKERS


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-L, L) with N points (N a power of two)."""

    num_points: int
    half_length: float

    def __post_init__(self):
        n = self.num_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise GridError(f"num_points must be a power of two >= 8, got {n!r}")
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise GridError(f"half_length must be positive, got {self.half_length!r}")
        object.__setattr__(self, "num_points", int(n))
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self):
        return 2.0 * self.half_length / self.num_points

    @property
    def dxi(self):
        return np.pi / self.half_length

    @cached_property
    def x(self):
        return -self.half_length + self.spacing * np.arange(self.num_points)

    @cached_property
    def mode_index(self):
        """Integer mode numbers j in FFT order."""
        n = self.num_points
        return np.fft.fftfreq(n, 1.0 / n).astype(np.int64)

    @cached_property
    def frequencies(self):
        return self.dxi * self.mode_index

    @cached_property
    def _sign(self):
        return np.where(self.mode_index % 2 == 0, 1.0, -1.0)

    @property
    def xi_max(self):
        return self.dxi * (self.num_points // 2)

    def zeros(self):
        return Field(self, np.zeros(self.num_points, dtype=complex))

    def sample(self, f):
        """Field with values ``f(x)`` on the grid nodes."""
        return Field(self, f(self.x))

    def from_spectrum(self, f):
        """Field whose spectrum is ``f(xi)`` on the grid frequencies."""
        return inverse_transform(Spectrum(self, f(self.frequencies)))


def _as_complex(values, n, what):
    arr = np.asarray(values, dtype=complex)
    if arr.shape != (n,):
        raise GridError(f"{what} must have shape ({n},), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples u(x_i) on a grid."""

    grid: GridSpec
    values: np.ndarray
    overflowed: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(
            self, "values", _as_complex(self.values, self.grid.num_points, "values"))

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Coefficients u_hat(xi_j) in FFT order."""

    grid: GridSpec
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients",
            _as_complex(self.coefficients, self.grid.num_points, "coefficients"))


def _check_same_grid(g1, g2):
    if g1 != g2:
        raise GridError(f"grid mismatch: {g1} vs {g2}")


def _first_nonfinite(arr):
    bad = np.flatnonzero(~np.isfinite(arr))
    return int(bad[0]) if bad.size else None


def transform(u):
    """Forward transform, u(x_i) -> u_hat(xi_j)."""
    idx = _first_nonfinite(u.values)
    if idx is not None:
        raise GridError(f"non-finite input value at index {idx}: {u.values[idx]}")
    g = u.grid
    coef = sfft.fft(u.values, workers=_WORKERS)
    coef *= g._sign * g.spacing
    return Spectrum(g, coef)


def inverse_transform(s):
    """Inverse transform, u_hat(xi_j) -> u(x_i)."""
    idx = _first_nonfinite(s.coefficients)
    if idx is not None:
        raise GridError(f"non-finite coefficient at index {idx}")
    g = s.grid
    vals = sfft.ifft(s.coefficients * g._sign, workers=_WORKERS)
    vals /= g.spacing
    return Field(g, vals)


def nyquist_fraction(s):
    """|u_hat| at the Nyquist mode relative to the spectrum's max modulus."""
    mod = np.abs(s.coefficients)
    top = mod.max()
    return 0.0 if top == 0 else float(mod[s.grid.num_points // 2] / top)


def _warn_nyquist(s):
    frac = nyquist_fraction(s)
    if frac > NYQUIST_TOL:
        warnings.warn(f"Nyquist coefficient is {frac:.2e} of the spectrum max",
                      NyquistWarning, stacklevel=3)


def multiplier_values(grid, m):
    """Evaluate a multiplier (callable or array) on the grid frequencies."""
    vals = m(grid.frequencies) if callable(m) else m
    vals = np.broadcast_to(np.asarray(vals), (grid.num_points,))
    idx = _first_nonfinite(vals)
    if idx is not None:
        raise GridError(
            f"multiplier is not finite at xi = {grid.frequencies[idx]!r}")
    return vals


def apply_fourier_multiplier(u, m):
    """Return m(D)u, i.e. the field with spectrum m(xi_j) u_hat(xi_j).

    ``m`` is a callable of the frequency array or a precomputed array in FFT
    order.
    """
    vals = multiplier_values(u.grid, m)
    s = transform(u)
    _warn_nyquist(s)
    return inverse_transform(Spectrum(u.grid, s.coefficients * vals))


def spectral_derivative(u, order):
    """d^order u / dx^order via the multiplier (i xi)^order, order <= 4."""
    if not 0 <= order <= 4:
        raise GridError(f"derivative order must be in 0..4, got {order}")
    if order == 0:
        return Field(u.grid, u.values.copy())
    return apply_fourier_multiplier(u, (1j * u.grid.frequencies) ** order)


def l2_norm(u):
    return float(np.sqrt(u.grid.spacing) * np.linalg.norm(u.values))


def spectral_l2_norm(s):
    """L2 norm evaluated on the frequency side, (1/2L) sum |u_hat|^2."""
    return float(np.linalg.norm(s.coefficients) / np.sqrt(2.0 * s.grid.half_length))


def inner(u, v):
    """L2 inner product <u, v> = dx sum u conj(v)."""
    _check_same_grid(u.grid, v.grid)
    return complex(u.grid.spacing * np.vdot(v.values, u.values))
