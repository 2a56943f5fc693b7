"""Discrete S^m_{0,0} symbol calculus on a periodic grid.

A symbol p(x, xi) is sampled as an N x N matrix p[i, j] = p(x_i, xi_j), the
column index following the FFT order of the frequencies.  Quantization is

    (p(x,D) u)(x_i) = 1/(2L) sum_j exp(i xi_j x_i) p(x_i, xi_j) u_hat(xi_j),

evaluated directly.  Symbols that are finite sums of products a(x) b(xi)
(everything built from the localizers is of this form) additionally keep
their factors, which gives exact O(N log N) quantization and lets the
truncated composition of two such symbols stay separable.
"""

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from . import _kernels
from .errors import GridError, LabError, PreconditionError
from .grid import Field, Spectrum, inner, inverse_transform, l2_norm, transform
from .gs_spaces import bracket_power


class Factor:
    """A function of one variable with derivatives up to ``max_order``.

    ``fn(t, k)`` must return the k-th derivative at the points ``t``.
    """

    def __init__(self, fn, max_order, name="f"):
        self._fn = fn
        self.max_order = max_order
        self.name = name

    def __call__(self, t, k=0):
        if k > self.max_order:
            raise LabError(
                f"{self.name}: derivative of order {k} requested, "
                f"only {self.max_order} available")
        return np.asarray(self._fn(np.asarray(t, dtype=float), k))

    def __repr__(self):
        return f"Factor({self.name}, max_order={self.max_order})"

    def derivative(self, k0):
        return Factor(lambda t, k: self._fn(t, k + k0), self.max_order - k0,
                      f"{self.name}^({k0})")

    def scaled(self, c):
        return Factor(lambda t, k: c * self._fn(t, k), self.max_order,
                      f"{c}*{self.name}")

    def __mul__(self, other):
        f, g = self._fn, other._fn

        def prod(t, k):
            return sum(comb(k, j) * f(t, j) * g(t, k - j) for j in range(k + 1))

        return Factor(prod, min(self.max_order, other.max_order),
                      f"{self.name}*{other.name}")

    @classmethod
    def constant(cls, c=1.0):
        return cls(lambda t, k: np.full(t.shape, c if k == 0 else 0.0,
                                        dtype=complex if np.iscomplexobj(c) else float),
                   10**6, repr(c))

    @classmethod
    def monomial(cls, n):
        def fn(t, k):
            if k > n:
                return np.zeros_like(t)
            return factorial(n) // factorial(n - k) * t ** (n - k)
        return cls(fn, 10**6, f"t^{n}")

    @classmethod
    def bracket(cls, p):
        """<t>^p with derivatives Q_k(t) <t>^(p - 2k), Q_{k+1} = Q_k'(1+t^2) + (p-2k) t Q_k."""
        P = np.polynomial.Polynomial
        polys = [P([1.0])]
        one_t2 = P([1.0, 0.0, 1.0])
        t_poly = P([0.0, 1.0])
        for k in range(24):
            q = polys[-1]
            polys.append(q.deriv() * one_t2 + (p - 2 * k) * t_poly * q)

        def fn(t, k):
            return polys[k](t) * bracket_power(t, p - 2 * k)
        return cls(fn, 24, f"<t>^{p}")

    @classmethod
    def chirp(cls, tau):
        """exp(-i tau t^2); derivatives H_k(t) exp(-i tau t^2), H_{k+1} = H_k' - 2i tau t H_k."""
        P = np.polynomial.Polynomial
        polys = [P([1.0 + 0j])]
        for _ in range(30):
            q = polys[-1]
            polys.append(q.deriv() + P([0.0, -2j * tau]) * q)

        def fn(t, k):
            return polys[k](t) * np.exp(-1j * tau * t * t)
        return cls(fn, 30, f"exp(-i{tau}t^2)")

    @classmethod
    def exponential(cls, c):
        """exp(c t) for complex c."""
        return cls(lambda t, k: c ** k * np.exp(c * t), 10**6, f"exp({c}t)")

    @classmethod
    def dilated(cls, fn, max_order, center, width, name="h"):
        """t -> fn((t - center) / width) given derivatives ``fn(y, k)``."""
        return cls(lambda t, k: width ** (-k) * fn((t - center) / width, k),
                   max_order, f"{name}((t-{center:g})/{width:g})")


@dataclass(frozen=True)
class SeminormEstimate:
    ell: int
    order: float
    value: float
    finite_difference: bool = False


class SymbolGrid:
    """A symbol sampled on ``grid`` x frequencies, with derivative access.

    Build with ``from_function`` (dense, optional analytic derivatives) or
    ``separable`` (sum of products of ``Factor`` objects).
    """

    def __init__(self, grid, order=0.0, *, values=None, derivative=None,
                 max_derivative=0, terms=None):
        self.grid = grid
        self.order = float(order)
        self._values = values
        self._derivative = derivative
        self.max_derivative = max_derivative
        self.terms = terms

    @classmethod
    def from_function(cls, grid, f, order=0.0, derivative=None, max_derivative=0):
        """Dense symbol ``f(X, XI)`` with optional ``derivative(X, XI, a, b)``.

        ``derivative`` returns d^a_xi d^b_x p for a, b <= ``max_derivative``.
        """
        X = grid.x[:, None]
        XI = grid.frequencies[None, :]
        vals = np.broadcast_to(f(X, XI), (grid.num_points,) * 2).astype(complex)
        deriv = None
        if derivative is not None:
            def deriv(a, b):
                return np.broadcast_to(derivative(X, XI, a, b),
                                       (grid.num_points,) * 2)
        return cls(grid, order, values=vals, derivative=deriv,
                   max_derivative=max_derivative if derivative else 0)

    @classmethod
    def separable(cls, grid, terms, order=0.0):
        """p(x, xi) = sum over (a, b) in ``terms`` of a(x) b(xi)."""
        terms = [(a, b) for a, b in terms]
        if not terms:
            raise LabError("separable symbol needs at least one term")
        return cls(grid, order, terms=terms,
                   max_derivative=min(min(a.max_order, b.max_order) for a, b in terms))

    @property
    def is_separable(self):
        return self.terms is not None

    def x_derivative_order(self):
        if self.is_separable:
            return min(a.max_order for a, _ in self.terms)
        return self.max_derivative

    def xi_derivative_order(self):
        if self.is_separable:
            return min(b.max_order for _, b in self.terms)
        return self.max_derivative

    def factor_samples(self, alpha=0, beta=0):
        """[(d^beta a(x_i), d^alpha b(xi_j))] for the separable terms."""
        g = self.grid
        return [(a(g.x, beta), b(g.frequencies, alpha)) for a, b in self.terms]

    def derivative(self, alpha, beta):
        """Dense matrix of d^alpha_xi d^beta_x p."""
        if self.is_separable:
            out = np.zeros((self.grid.num_points,) * 2, dtype=complex)
            for ax, bxi in self.factor_samples(alpha, beta):
                out += np.outer(ax, bxi)
            return out
        if alpha == 0 and beta == 0:
            return self.values
        if self._derivative is None or max(alpha, beta) > self.max_derivative:
            raise LabError(
                f"derivative ({alpha}, {beta}) not available "
                f"(max {self.max_derivative})")
        return self._derivative(alpha, beta)

    @property
    def values(self):
        if self._values is None:
            self._values = self.derivative(0, 0)
        return self._values

    def min_real_part(self, rows=256):
        """min Re p over the grid, computed in row blocks."""
        if not self.is_separable:
            return float(self.values.real.min())
        fac = self.factor_samples()
        n = self.grid.num_points
        best = np.inf
        for start in range(0, n, rows):
            sl = slice(start, min(start + rows, n))
            block = sum(np.outer(ax[sl], bxi) for ax, bxi in fac)
            best = min(best, float(block.real.min()))
        return best


def quantize(p, u, method="auto", backend=None):
    """Apply p(x, D) to the field u.

    ``method`` is "direct" (O(N^2) sum, numba-accelerated), "separable"
    (per-term a(x) * b(D)u) or "auto" (separable when available).
    """
    if p.grid != u.grid:
        raise GridError(f"symbol grid {p.grid} does not match field grid {u.grid}")
    g = u.grid
    s = transform(u)
    if method == "auto":
        method = "separable" if p.is_separable else "direct"
    if method == "separable":
        if not p.is_separable:
            raise LabError("symbol has no separable form")
        out = np.zeros(g.num_points, dtype=complex)
        for ax, bxi in p.factor_samples():
            out += ax * inverse_transform(Spectrum(g, bxi * s.coefficients)).values
        return Field(g, out)
    if method != "direct":
        raise LabError(f"unknown quantization method {method!r}")
    c = g._sign * s.coefficients / (2.0 * g.half_length)
    tw = _twiddles(g.num_points)
    return Field(g, _kernels.quantize_direct(p.values, c, tw, backend=backend))


_TW_CACHE = {}


def _twiddles(n):
    if n not in _TW_CACHE:
        _TW_CACHE[n] = _kernels.twiddles(n)
    return _TW_CACHE[n]


def _fd_derivative(vals, grid, alpha, beta):
    """Central differences, step dx in x and dxi in xi (FFT column order)."""
    v = np.fft.fftshift(vals, axes=1)
    for _ in range(alpha):
        v = np.gradient(v, grid.dxi, axis=1)
    for _ in range(beta):
        v = np.gradient(v, grid.spacing, axis=0)
    return np.fft.ifftshift(v, axes=1)


def estimate_seminorm(p, ell, m=None, fd_fallback=False):
    """max over alpha, beta <= ell of sup |d^alpha_xi d^beta_x p| <xi>^(-m)."""
    m = p.order if m is None else m
    g = p.grid
    w = bracket_power(g.frequencies, -m)
    avail = min(p.x_derivative_order(), p.xi_derivative_order())
    fd = ell > avail
    if fd and not fd_fallback:
        raise LabError(
            f"seminorm of order {ell} needs derivatives beyond {avail}; "
            "enable the finite-difference fallback")
    best = 0.0
    for a in range(ell + 1):
        for b in range(ell + 1):
            if p.is_separable and len(p.terms) == 1 and not fd:
                ax, bxi = p.factor_samples(a, b)[0]
                val = float(np.max(np.abs(ax)) * np.max(np.abs(bxi) * w))
            else:
                mat = (_fd_derivative(p.values, g, a, b) if fd
                       else p.derivative(a, b))
                val = float(np.max(np.abs(mat) * w[None, :]))
            best = max(best, val)
    return SeminormEstimate(ell, m, best, fd)


def compose_truncated(p1, p2, n_trunc):
    """sum_{alpha < n_trunc} (1/alpha!) d^alpha_xi p1 * D^alpha_x p2, D_x = -i d_x."""
    if p1.grid != p2.grid:
        raise GridError("symbols live on different grids")
    if n_trunc < 1:
        raise LabError("n_trunc must be at least 1")
    need = n_trunc - 1
    if p1.xi_derivative_order() < need or p2.x_derivative_order() < need:
        raise LabError(
            f"composition to {n_trunc} terms needs {need} derivatives: "
            f"p1 has {p1.xi_derivative_order()} in xi, p2 has {p2.x_derivative_order()} in x")
    order = p1.order + p2.order
    if p1.is_separable and p2.is_separable:
        terms = []
        for a in range(n_trunc):
            c = (-1j) ** a / factorial(a)
            for a1, b1 in p1.terms:
                for a2, b2 in p2.terms:
                    terms.append((a1 * a2.derivative(a).scaled(c), b1.derivative(a) * b2))
        return SymbolGrid.separable(p1.grid, terms, order)
    q = np.zeros((p1.grid.num_points,) * 2, dtype=complex)
    for a in range(n_trunc):
        q += ((-1j) ** a / factorial(a)) * p1.derivative(a, 0) * p2.derivative(0, a)
    return SymbolGrid(p1.grid, order, values=q)


def garding_lower_check(p, ensemble, tol=1e-12):
    """min over the ensemble of Re <p(x,D)u, u> / ||u||^2.

    Rejects symbols whose real part is negative on the grid (beyond ``tol``
    times the symbol's largest real part).
    """
    if not ensemble:
        raise PreconditionError("empty ensemble")
    low = p.min_real_part()
    if low < -tol * max(1.0, abs(low)):
        raise PreconditionError(f"symbol has negative real part {low:.3e} on the grid")
    best = np.inf
    for u in ensemble:
        nrm = l2_norm(u)
        if nrm == 0:
            raise PreconditionError("ensemble member is zero")
        val = inner(quantize(p, u), u).real / nrm**2
        best = min(best, val)
    return float(best)


def cv_bound_check(p, ensemble):
    """max ||p(x,D)u|| / ||u|| over the ensemble, divided by the 2-seminorm."""
    if p.order != 0:
        raise PreconditionError(f"order-0 symbol required, got order {p.order}")
    if not ensemble:
        raise PreconditionError("empty ensemble")
    semi = estimate_seminorm(p, 2, 0.0).value
    ratio = max(l2_norm(quantize(p, u)) / l2_norm(u) for u in ensemble)
    if semi == 0:
        # p vanishes on the grid, so the operator does too
        return 0.0
    return ratio / semi


def random_bandlimited(grid, rng, band=None, count=1, support=None):
    """Random fields with spectrum in ``band`` (|xi| interval or signed pair).

    ``band`` defaults to the lower third of the spectrum.  ``support`` is an
    optional x-interval outside of which the field is smoothly tapered to
    zero before band-limiting.
    """
    xi = grid.frequencies
    lo, hi = band if band is not None else (-grid.xi_max / 3, grid.xi_max / 3)
    mask = (xi >= lo) & (xi <= hi)
    out = []
    for _ in range(count):
        c = np.where(mask, rng.standard_normal(xi.size) + 1j * rng.standard_normal(xi.size), 0)
        f = inverse_transform(Spectrum(grid, c))
        if support is not None:
            a, b = support
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            taper = np.exp(-((grid.x - mid) / (0.5 * half)) ** 8)
            f = Field(grid, f.values * taper)
        out.append(f)
    return out


def gaussian_packets(grid, centers, width=1.0):
    """Gaussian packets exp(-(x-x0)^2/(2 w^2) + i xi0 x) for (x0, xi0) in centers."""
    x = grid.x
    return [Field(grid, np.exp(-0.5 * ((x - x0) / width) ** 2 + 1j * xi0 * x))
            for x0, xi0 in centers]
