"""Smooth plateau cutoff built from the integral of exp(-1/(1-y^2)).

h = 1 on |x| <= 1/2, h = 0 on |x| >= 1, and on the transition layer
h(x) = B(3 - 4|x|) with B(y) the normalised running integral of the bump
over [-1, y].  The symmetry B(y) + B(-y) = 1 makes both ends of the layer
accurate to full relative precision.

Derivatives of the bump are b(y) times a rational function of y, so h^(a)
is available in closed form; the rational factor and the exponential are
combined in log space so the essential zero at y = +-1 never produces
inf * 0.
"""

from math import comb, lgamma

import numpy as np

from .errors import LabError, ResolutionError

MAX_ORDER = 12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _bump_ratios(y, kmax):
    """g_k = b^(k)/b for k = 0..kmax from the ODE (1-y^2)^2 b' = -2y b.

    Differentiating the ODE k times with Leibniz' rule gives a forward
    recurrence in the values themselves, which stays accurate near |y| = 1
    where expanding P_k in monomials cancels badly.
    """
    q = (1 - 2 * y**2 + y**4, -4 * y + 4 * y**3, -4 + 12 * y**2, 24 * y,
         np.full_like(y, 24.0))
    g = [np.ones_like(y)]
    for k in range(kmax):
        rhs = -2 * y * g[k]
        if k >= 1:
            rhs = rhs - 2 * k * g[k - 1]
        for j in range(1, min(k, 4) + 1):
            rhs = rhs - comb(k, j) * q[j] * g[k + 1 - j]
        g.append(rhs / q[0])
    return g


def bump_derivative(y, k=0):
    """k-th derivative of exp(-1/(1-y^2)), zero for |y| >= 1."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    # beyond this the bump itself underflows
    inside = 1.0 - y * y > 1.0 / 740.0
    yi = y[inside]
    g = _bump_ratios(yi, k)[k]
    with np.errstate(divide="ignore"):
        logmag = -1.0 / (1.0 - yi * yi) + np.log(np.abs(g))
    out[inside] = np.sign(g) * np.exp(logmag)
    return out


class _BumpIntegral:
    """Composite Gauss-Legendre table for the running bump integral."""

    def __init__(self, panels=512):
        self.panels = panels
        self.width = 2.0 / panels
        edges = -1.0 + self.width * np.arange(panels + 1)
        cum = np.zeros(panels + 1)
        cum[1:] = np.cumsum([self._gl(a, b) for a, b in zip(edges[:-1], edges[1:])])
        self.edges = edges
        self.cumulative = cum
        self.total = cum[-1]

    @staticmethod
    def _gl(a, b):
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = bump_derivative(nodes, 0)
        return half * (vals @ _GL_WEIGHTS)

    def __call__(self, y):
        """B(y) for y in [-1, 1]."""
        y = np.clip(np.asarray(y, dtype=float), -1.0, 1.0)
        idx = np.minimum(((y + 1.0) / self.width).astype(int), self.panels - 1)
        base = self.cumulative[idx]
        part = self._gl(self.edges[idx].ravel(), y.ravel()).reshape(y.shape)
        return (base + part) / self.total


_B = None


def _bump_integral():
    global _B
    if _B is None:
        _B = _BumpIntegral()
    return _B


def bump_mass():
    """Z = integral of exp(-1/(1-y^2)) over [-1, 1]."""
    return _bump_integral().total


def h(x, k=0):
    """k-th derivative of the plateau cutoff, k <= MAX_ORDER."""
    if not 0 <= k <= MAX_ORDER:
        raise LabError(f"cutoff derivative order {k} outside 0..{MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    layer = (ax > 0.5) & (ax < 1.0)
    out = np.zeros_like(x)
    if k == 0:
        out[ax <= 0.5] = 1.0
        out[layer] = _bump_integral()(3.0 - 4.0 * ax[layer])
        return out
    xl = x[layer]
    # d^k/dx^k B(3 - 4x) on x > 0, then parity (-1)^k for x < 0
    vals = (-4.0) ** k * bump_derivative(3.0 - 4.0 * np.abs(xl), k - 1) / bump_mass()
    out[layer] = np.where(xl < 0, (-1.0) ** k, 1.0) * vals
    return out


def h_integral():
    """Exact integral of h: 1 + 2 * (1/4) * mean of B over the layer = 1.5."""
    # int_{1/2}^{1} B(3-4x) dx = (1/4) int_{-1}^{1} B = 1/4 by B(y)+B(-y)=1
    return 1.5


def derivative_sup(k, samples=200001):
    """sup |h^(k)| estimated on a dense sample of the transition layer."""
    x = np.linspace(0.5, 1.0, samples)
    return float(np.max(np.abs(h(x, k))))


def fit_gevrey_order(orders=range(1, 9)):
    """Fit log sup|h^(a)| = c0 + c1 a + theta log a! and return theta."""
    orders = list(orders)
    y = np.log([derivative_sup(a) for a in orders])
    A = np.column_stack([np.ones(len(orders)), orders,
                         [lgamma(a + 1) for a in orders]])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[2])


def check_transition_resolved(scale, grid, min_points=16):
    """Reject grids with fewer than ``min_points`` nodes per transition layer.

    ``scale`` is the dilation applied to h (the layer has width scale / 2).
    """
    pts = 0.5 * scale / grid.spacing
    if pts < min_points:
        raise ResolutionError(
            f"cutoff transition of width {0.5 * scale:g} has {pts:.1f} grid points; "
            f"need {min_points}")
