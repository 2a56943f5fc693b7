"""Wave packets, phase-space localizers and the localized energy E_k.

For a packet scale sigma_k the localizers are

    w_k^(ab)(x, xi) = h^(a)((x - 4 sigma_k)/sigma_k) h^(b)((xi - sigma_k)/(sigma_k/4)),

and the energy is E_k = sum_{a,b <= N_k} (a! b!)^(-theta1) ||w_k^(ab)(x,D) u||
with N_k = floor(sigma_k^(lambda/theta1)).  Every w_k^(ab) is a product
a(x) b(xi), so w_k^(ab)(x,D) u = a(x) * (b(D) u) exactly.

``growth_sweep`` evolves phi_k under the model equation and fits the growth
of log E_k against a power of sigma_k.
"""

from dataclasses import dataclass, field
from math import floor, lgamma

import numpy as np

from . import cutoff
from .errors import FitError, LabError, PreconditionError, ResolutionError
from .evolution import EvolutionConfig, ModelParams, evolve, dealias_mask
from .grid import Field, GridSpec, Spectrum, inverse_transform, l2_norm, transform
from .gs_spaces import bracket_power
from .psido import Factor, SymbolGrid

PHI_FLOOR = 1e-12
NK_CAP = cutoff.MAX_ORDER


@dataclass(frozen=True)
class PacketSpec:
    rho0: float
    theta: float
    rho2: float
    s: float
    sigma_k: float

    def __post_init__(self):
        if min(self.rho0, self.sigma_k) <= 0 or self.rho2 < 0:
            raise LabError("rho0 and sigma_k must be positive, rho2 nonnegative")
        if self.theta <= 1 or self.s < 1:
            raise LabError("need theta > 1 and s >= 1")

    @property
    def log_scale(self):
        """log of the amplitude factor exp(-rho2 4^(1/s) sigma_k^(1/s))."""
        return -self.rho2 * 4.0 ** (1.0 / self.s) * self.sigma_k ** (1.0 / self.s)


def required_xi_max(rho0, theta, floor_=PHI_FLOOR):
    """Smallest xi_max with exp(-rho0 <xi_max>^(1/theta)) < floor_."""
    b = (-np.log(floor_) / rho0) ** theta
    return float(np.sqrt(max(b * b - 1.0, 0.0)))


def make_phi(rho0, theta, grid):
    """Field with spectrum exp(-rho0 <xi>^(1/theta)) on ``grid``."""
    tail = np.exp(-rho0 * bracket_power(grid.xi_max, 1.0 / theta))
    if not tail < PHI_FLOOR:
        raise ResolutionError(
            f"spectrum at xi_max = {grid.xi_max:.4g} is {tail:.3e}, not below {PHI_FLOOR}")
    return grid.from_spectrum(lambda xi: np.exp(-rho0 * bracket_power(xi, 1.0 / theta)))


def support_radius(u, rel=1e-14, center=0.0):
    """Largest |x - center| where |u| exceeds ``rel`` times its maximum."""
    mod = np.abs(u.values)
    keep = mod > rel * mod.max()
    return float(np.abs(u.grid.x[keep] - center).max())


def make_phi_k(phi, spec):
    """exp(-rho2 4^(1/s) sigma_k^(1/s)) phi(x - 4 sigma_k) via the shift multiplier."""
    g = phi.grid
    shift = 4.0 * spec.sigma_k
    reach = shift + support_radius(phi)
    if reach >= g.half_length:
        raise PreconditionError(
            f"packet support reaches x = {reach:.4g}, beyond the domain edge {g.half_length:.4g}")
    s = transform(phi).coefficients
    s = s * np.exp(-1j * shift * g.frequencies) * np.exp(spec.log_scale)
    return inverse_transform(Spectrum(g, s))


@dataclass(frozen=True, eq=False)
class CutoffReport:
    field: Field
    integral: float
    min_hat: float


def make_cutoff_h(grid, theta_h=2.0):
    """Sample h on ``grid`` and report its integral and the min of h-hat."""
    cutoff.check_transition_resolved(1.0, grid)
    f = grid.sample(cutoff.h)
    integral = float(grid.spacing * f.values.real.sum())
    hat = transform(f).coefficients.real
    return CutoffReport(f, integral, float(hat.min()))


def _h_factor(alpha, center, width):
    def fn(t, k):
        return cutoff.h(t, alpha + k)
    return Factor.dilated(fn, cutoff.MAX_ORDER - alpha, center, width,
                          name=f"h^({alpha})")


def localizer_factors(sigma_k, alpha, beta):
    """(x-factor, xi-factor) of w_k^(alpha beta)."""
    if max(alpha, beta) > cutoff.MAX_ORDER:
        raise LabError(f"cutoff derivatives available up to {cutoff.MAX_ORDER}")
    return (_h_factor(alpha, 4.0 * sigma_k, sigma_k),
            _h_factor(beta, sigma_k, 0.25 * sigma_k))


def chi_k(sigma_k):
    return _h_factor(0, sigma_k, 0.75 * sigma_k)


def psi_k(sigma_k):
    return _h_factor(0, 4.0 * sigma_k, 3.0 * sigma_k)


def make_localizers(grid, sigma_k, alpha=0, beta=0):
    """w_k^(alpha beta) as a separable symbol, plus chi_k and psi_k."""
    ax, bxi = localizer_factors(sigma_k, alpha, beta)
    w = SymbolGrid.separable(grid, [(ax, bxi)], order=0.0)
    return w, chi_k(sigma_k), psi_k(sigma_k)


def i2k_symbol(grid, sigma, sigma_k):
    """{<x>^(-sigma) xi - c0 <sigma_k>^(-sigma) sigma_k} psi_k(x) chi_k(xi), c0 = 7^(-sigma)/4.

    Nonnegative: on the support x <= 7 sigma_k and xi >= sigma_k/4.
    """
    c0 = 7.0 ** (-sigma) / 4.0
    k = c0 * float(bracket_power(sigma_k, -sigma)) * sigma_k
    psi, chi = psi_k(sigma_k), chi_k(sigma_k)
    terms = [(Factor.bracket(-sigma) * psi, Factor.monomial(1) * chi),
             (psi.scaled(-k), chi)]
    return SymbolGrid.separable(grid, terms, order=1.0)


def support_disjointness_defect(grid, sigma_k, alpha, beta):
    """max |(1 - psi_k chi_k) w_k^(alpha beta)| over the grid (should be 0)."""
    ax, bxi = localizer_factors(sigma_k, alpha, beta)
    a = ax(grid.x)
    b = bxi(grid.frequencies)
    psi = psi_k(sigma_k)(grid.x)
    chi = chi_k(sigma_k)(grid.frequencies)
    # outer products only where the symbol is nonzero
    ia = np.flatnonzero(a)
    ib = np.flatnonzero(b)
    if ia.size == 0 or ib.size == 0:
        return 0.0
    block = (1.0 - np.outer(psi[ia], chi[ib])) * np.outer(a[ia], b[ib])
    return float(np.abs(block).max())


def compute_N_k(sigma_k, lam, theta1):
    """floor(sigma_k^(lambda/theta1)); representation error of 1e-12 is forgiven."""
    if not 0 < lam < 1:
        raise LabError("lambda must lie in (0, 1)")
    if theta1 < 1:
        raise LabError("theta1 must be at least 1")
    v = sigma_k ** (lam / theta1)
    n = floor(v * (1 + 1e-12))
    if n < 1:
        raise LabError(f"N_k = 0 for sigma_k = {sigma_k}; sigma_k too small")
    return n


@dataclass(frozen=True)
class EnergyConfig:
    lam: float
    theta1: float
    sigma_k: float
    theta_h: float = 2.0
    T_star: float = 0.1

    def __post_init__(self):
        if not self.theta1 > self.theta_h:
            raise LabError("theta1 must exceed theta_h")

    @property
    def N_k(self):
        return compute_N_k(self.sigma_k, self.lam, self.theta1)

    @property
    def order(self):
        """Effective truncation, capped at the available cutoff derivatives."""
        return min(self.N_k, NK_CAP)

    @property
    def truncated(self):
        return self.N_k > NK_CAP


def _log_weights(n, theta1):
    lf = np.array([lgamma(k + 1) for k in range(n + 1)])
    return -theta1 * (lf[:, None] + lf[None, :])


def aggregate_energy(terms, theta1):
    """sum terms[a][b] (a! b!)^(-theta1), weights applied in log space."""
    terms = np.asarray(terms, dtype=float)
    n = terms.shape[0] - 1
    lw = _log_weights(n, theta1)
    with np.errstate(divide="ignore"):
        lt = np.log(terms)
    return float(np.sum(np.exp(lt + lw)))


def energy_terms(u, cfg):
    """Unweighted ||w_k^(ab)(x,D) u|| for a, b <= N_k (capped)."""
    g = u.grid
    n = cfg.order
    s = transform(u).coefficients
    x_fac = [localizer_factors(cfg.sigma_k, a, 0)[0](g.x) for a in range(n + 1)]
    terms = np.zeros((n + 1, n + 1))
    for b in range(n + 1):
        bxi = localizer_factors(cfg.sigma_k, 0, b)[1](g.frequencies)
        if not np.any(bxi):
            continue
        v = inverse_transform(Spectrum(g, bxi * s)).values
        for a in range(n + 1):
            terms[a, b] = np.sqrt(g.spacing) * np.linalg.norm(x_fac[a] * v)
    return terms


def compute_energy(u, cfg):
    """(E_k, unweighted term matrix)."""
    terms = energy_terms(u, cfg)
    return aggregate_energy(terms, cfg.theta1), terms


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    times: np.ndarray
    E_k: np.ndarray
    terms: np.ndarray
    theta1: float
    log_factors: np.ndarray = None

    def log_E(self):
        lf = 0.0 if self.log_factors is None else self.log_factors
        return np.log(self.E_k) + lf

    def recomputed(self):
        return np.array([aggregate_energy(t, self.theta1) for t in self.terms])


def energy_trace(snapshots, cfg):
    """EnergyTrace from evolve snapshots (time, field, log factor)."""
    times, es, terms, lfs = [], [], [], []
    for t, u, lf in snapshots:
        e, tm = compute_energy(u, cfg)
        times.append(t)
        es.append(e)
        terms.append(tm)
        lfs.append(lf)
    return EnergyTrace(np.array(times), np.array(es), np.array(terms), cfg.theta1,
                       np.array(lfs))


def term_growth_constant(terms, theta_h, norm):
    """Smallest C with terms[a][b] <= C^(a+b+1) (a! b!)^theta_h norm."""
    n = terms.shape[0] - 1
    best = -np.inf
    for a in range(n + 1):
        for b in range(n + 1):
            if terms[a, b] <= 0:
                continue
            lhs = np.log(terms[a, b] / norm) - theta_h * (lgamma(a + 1) + lgamma(b + 1))
            best = max(best, lhs / (a + b + 1))
    return float(np.exp(best))


# ---------------------------------------------------------------- sweeps


def packet_grid(sigma_k, rho0, theta, domain_factor=8.0, xi_max=None):
    """Grid with L = domain_factor * sigma_k resolving phi-hat to PHI_FLOOR."""
    L = domain_factor * sigma_k
    need = max(required_xi_max(rho0, theta), xi_max or 0.0)
    n = 1 << int(np.ceil(np.log2(2 * L * need / np.pi * (1 + 1e-12))))
    return GridSpec(max(n, 8), L)


def band_grid(sigma_k, min_half_length, xi_factor=3.0):
    """Power-of-two grid with xi_max = xi_factor * sigma_k and L >= min_half_length.

    Pinning xi_max (rather than L) bounds the largest retained frequency,
    and with it the amplification of round-off by the drift.
    """
    xi_max = xi_factor * sigma_k
    n = 1 << int(np.ceil(np.log2(2 * min_half_length * xi_max / np.pi * (1 - 1e-12))))
    n = max(n, 8)
    return GridSpec(n, n * np.pi / (2 * xi_max))


def band_packet(spec, grid):
    """chi_k(D) phi_k, built directly from its spectrum.

    chi_k vanishes above 1.75 sigma_k, so the spectrum is exact on any grid
    with xi_max beyond that; the phi-hat resolution check does not apply.
    """
    sk = spec.sigma_k
    if grid.xi_max <= 1.75 * sk:
        raise ResolutionError(f"xi_max = {grid.xi_max:.4g} does not cover the band edge {1.75 * sk:.4g}")
    if 5.0 * sk >= grid.half_length:
        raise PreconditionError(f"domain half-length {grid.half_length:.4g} below 5 sigma_k")
    chi = chi_k(sk)

    def spectrum(xi):
        amp = np.exp(-spec.rho0 * bracket_power(xi, 1.0 / spec.theta) + spec.log_scale)
        return amp * chi(xi) * np.exp(-4j * sk * xi)
    return grid.from_spectrum(spectrum)


@dataclass(frozen=True)
class InitialEnergyReport:
    sigma_k: tuple
    log_E0: tuple
    combination: tuple
    rate: float
    intercept: float
    residual: float
    fitted_range: float
    lower_bound_holds: bool

    @property
    def relative_residual(self):
        return self.residual / self.fitted_range if self.fitted_range else np.inf


def initial_energy_bound_check(specs, lam=0.25, theta1=2.2, theta_h=2.0):
    """log E_k(0) + rho2 4^(1/s) sigma_k^(1/s) fitted as a - c sigma_k^(1/theta).

    ``specs`` is a list of PacketSpec sharing rho0, theta, rho2 and s.  The
    residual is the max abs deviation of the fit, the range is the spread of
    the fitted values; the lower-bound flag checks every point against the
    fitted model less 10% (log 0.9).
    """
    specs = sorted(specs, key=lambda sp: sp.sigma_k)
    if len(specs) < 3:
        raise FitError("need at least three sigma_k values")
    theta = specs[0].theta
    logs, combo = [], []
    for sp in specs:
        g = packet_grid(sp.sigma_k, sp.rho0, sp.theta)
        phi_k = make_phi_k(make_phi(sp.rho0, sp.theta, g), sp)
        cfg = EnergyConfig(lam, theta1, sp.sigma_k, theta_h)
        e, _ = compute_energy(phi_k, cfg)
        if not e > 0:
            raise PreconditionError(f"E_k(0) vanished at sigma_k = {sp.sigma_k}")
        logs.append(np.log(e))
        combo.append(np.log(e) - sp.log_scale)
    xs = np.array([sp.sigma_k ** (1.0 / theta) for sp in specs])
    y = np.array(combo)
    A = np.column_stack([np.ones_like(xs), -xs])
    (a, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ [a, c]
    resid = float(np.max(np.abs(fit - y)))
    rng = float(fit.max() - fit.min())
    holds = bool(np.all(y >= fit + np.log(0.9)))
    return InitialEnergyReport(tuple(sp.sigma_k for sp in specs), tuple(logs), tuple(combo),
                               float(c), float(a), resid, rng, holds)


@dataclass(frozen=True)
class SweepPoint:
    sigma_k: float
    N_k: int
    logE0: float
    logET: float
    T_star: float
    num_points: int
    half_length: float
    dt: float
    boundary_fraction: float = 0.0
    flag: str = ""

    CSV_HEADER = ("sigma_k", "N_k", "logE0", "logET", "T_star")

    def csv_row(self):
        return (self.sigma_k, self.N_k, self.logE0, self.logET, self.T_star)

    @property
    def growth(self):
        return self.logET - self.logE0


@dataclass(frozen=True)
class SweepReport:
    model_sigma: float
    points: tuple
    p: float
    c: float
    residual: float
    dropped: tuple = field(default_factory=tuple)


def fit_power_law(sig, y, p_grid=None):
    """Best (p, c, rms) for y ~ c sigma^p over a grid of exponents."""
    sig = np.asarray(sig, dtype=float)
    y = np.asarray(y, dtype=float)
    p_grid = np.linspace(0.0, 2.0, 2001) if p_grid is None else p_grid
    best = None
    for p in p_grid:
        z = sig ** p
        c = float(z @ y / (z @ z))
        r = float(np.sqrt(np.mean((c * z - y) ** 2)))
        if best is None or r < best[2]:
            best = (float(p), c, r)
    return best


def _exact_sigma0_spectrum(u, T):
    """sigma = 0 solution at T as (spectrum scaled by exp(-M), M)."""
    g = u.grid
    s = transform(u).coefficients
    xi = g.frequencies
    live = np.abs(s) > 0
    shift = float(np.max(xi[live])) * T if live.any() else 0.0
    return Spectrum(g, s * np.exp((xi - 1j * xi**2) * T - shift)), shift


def growth_point(sigma_k, model_sigma, *, rho0=1.0, theta=2.0, rho2=0.0, s=1.0,
                 T_star=0.1, lam=None, theta1=2.2, theta_h=2.0, drift=True,
                 exact=False, dt=None, domain_factor=6.0, xi_factor=3.0, cfl=0.45):
    """One sweep point: log E_k at t = 0 and at T_star for chi_k(D) phi_k."""
    lam = 0.5 * (1.0 - model_sigma) if lam is None else lam
    spec = PacketSpec(rho0, theta, rho2, s, sigma_k)
    g = band_grid(sigma_k, domain_factor * sigma_k, xi_factor)
    u0 = band_packet(spec, g)
    cfg = EnergyConfig(lam, theta1, sigma_k, theta_h, T_star)
    e0, _ = compute_energy(u0, cfg)
    xi_keep = float(np.abs(g.frequencies[dealias_mask(g)]).max())
    if dt is None:
        dt = T_star / int(np.ceil(T_star * xi_keep / cfl))
    bfrac = 0.0
    if exact:
        if model_sigma != 0 or not drift:
            raise LabError("the exact solver covers only sigma = 0 with drift")
        sT, lf = _exact_sigma0_spectrum(u0, T_star)
        uT = inverse_transform(sT)
    else:
        ec = EvolutionConfig(dt, T_star, max_phase=None)
        rec = evolve(u0, ModelParams(model_sigma, drift), ec, record_stride=10**12)
        uT, lf = rec.final, rec.final_log_factor
        bfrac = rec.boundary_fraction
    eT, _ = compute_energy(uT, cfg)
    flag = "truncated_N_k" if cfg.truncated else ""
    return SweepPoint(sigma_k, cfg.N_k, float(np.log(e0)), float(np.log(eT) + lf), T_star,
                      g.num_points, g.half_length, dt, bfrac, flag)


def growth_sweep(model_sigma, sigma_k_list, **kw):
    """Growth of log E_k over [0, T_star] for each sigma_k, fitted as c sigma_k^p.

    Keyword arguments are forwarded to ``growth_point``.  Points whose
    trajectory fails are dropped and listed; fewer than three survivors is an
    error.
    """
    lam = kw.get("lam")
    lam = 0.5 * (1.0 - model_sigma) if lam is None else lam
    if not lam < 1.0 - model_sigma:
        raise PreconditionError(f"lambda = {lam} must be below 1 - sigma = {1 - model_sigma}")
    points, dropped = [], []
    for sk in sorted(sigma_k_list):
        try:
            points.append(growth_point(sk, model_sigma, **kw))
        except (RuntimeError, FloatingPointError) as exc:
            dropped.append((sk, str(exc)))
    if len(points) < 3:
        raise FitError(f"only {len(points)} sweep points survived: {dropped}")
    p, c, r = fit_power_law([pt.sigma_k for pt in points], [pt.growth for pt in points])
    return SweepReport(model_sigma, tuple(points), p, c, r, tuple(dropped))
