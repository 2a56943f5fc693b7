import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import gslab.illposedness as ill
from gslab.errors import (EvolutionError, FitError, LabError, PreconditionError,
                          ResolutionError)
from gslab.grid import Field, GridSpec, l2_norm, transform
from gslab.gs_spaces import GSParams, fit_decay_exponent, gs_sobolev_norm
from gslab.illposedness import (EnergyConfig, PacketSpec, aggregate_energy, band_grid,
                                band_packet, compute_energy, compute_N_k, energy_terms,
                                energy_trace, growth_point, growth_sweep,
                                initial_energy_bound_check, make_cutoff_h, make_localizers,
                                make_phi, make_phi_k, support_disjointness_defect,
                                term_growth_constant)
from gslab.evolution import EvolutionConfig, ModelParams, evolve
from gslab.psido import quantize, random_bandlimited


@pytest.fixture(scope="module")
def phi():
    return make_phi(1.0, 2.0, GridSpec(2**18, 400.0))


def test_make_phi_spectrum(phi):
    g = phi.grid
    s = transform(phi).coefficients
    i0 = int(np.flatnonzero(g.frequencies == 0)[0])
    assert s[i0].real == pytest.approx(np.exp(-1.0), rel=1e-13)
    assert np.abs(s[i0].imag) < 1e-15
    assert np.abs(phi.values.imag).max() <= 1e-12 * np.abs(phi.values).max()
    # even: phi(x_i) = phi(-x_i), x_{N-i} = -x_i
    v = phi.values.real
    assert np.abs(v[1:] - v[1:][::-1]).max() <= 1e-12 * np.abs(v).max()


def test_make_phi_decay(phi):
    assert fit_decay_exponent(phi).inverse_order == pytest.approx(1.0, abs=0.05)


def test_make_phi_resolution_check():
    with pytest.raises(ResolutionError):
        make_phi(1.0, 2.0, GridSpec(1024, 100.0))


def test_make_phi_k(phi):
    for sk in (20.0, 40.0, 80.0):
        spec = PacketSpec(1.0, 2.0, 0.05, 2.0, sk)
        pk = make_phi_k(phi, spec)
        assert l2_norm(pk) == pytest.approx(np.exp(spec.log_scale) * l2_norm(phi), rel=1e-12)
        g = phi.grid
        assert abs(g.x[np.argmax(np.abs(pk.values))] - 4 * sk) <= g.spacing


def test_make_phi_k_norm_bounded(phi):
    p = GSParams(2.0, 2.0, 0.5, 0.05)
    base = gs_sobolev_norm(phi, p)
    for sk in (20.0, 40.0, 80.0):
        assert gs_sobolev_norm(make_phi_k(phi, PacketSpec(1.0, 2.0, 0.05, 2.0, sk)), p) <= base


def test_make_phi_k_boundary_rejected(phi):
    with pytest.raises(PreconditionError, match="edge"):
        make_phi_k(phi, PacketSpec(1.0, 2.0, 0.0, 1.0, 100.0))


def test_packet_spec_validation():
    with pytest.raises(LabError):
        PacketSpec(0.0, 2.0, 0.0, 1.0, 10.0)
    with pytest.raises(LabError):
        PacketSpec(1.0, 1.0, 0.0, 1.0, 10.0)


def test_cutoff_field():
    g = GridSpec(1024, 4.0)
    rep = make_cutoff_h(g)
    x = g.x
    assert rep.field.values[np.flatnonzero(x == 0)[0]] == 1.0
    assert np.all(rep.field.values[np.abs(x) >= 1] == 0.0)
    assert 1.0 < rep.integral < 2.0
    assert rep.integral == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ResolutionError):
        make_cutoff_h(GridSpec(64, 4.0))


def test_localizer_center_and_support():
    sk = 40.0
    g = GridSpec(8192, 320.0)
    w, chi, psi = make_localizers(g, sk)
    (ax, bxi), = w.factor_samples()
    assert w.terms[0][0](np.array([4 * sk]))[0] * w.terms[0][1](np.array([sk]))[0] == 1.0
    xs = g.x[ax != 0]
    xis = g.frequencies[bxi != 0]
    assert xs.min() >= 3 * sk and xs.max() <= 5 * sk
    assert xis.min() >= 0.75 * sk and xis.max() <= 1.25 * sk
    assert chi(np.array([sk]))[0] == 1.0 and psi(np.array([4 * sk]))[0] == 1.0


def test_localizer_order_limit():
    with pytest.raises(LabError):
        make_localizers(GridSpec(64, 10.0), 2.0, 13, 0)


@pytest.mark.parametrize("sk", [20.0, 40.0, 80.0])
def test_support_disjointness(sk):
    # smallest power-of-two grid covering x <= 5 sigma_k and xi <= 1.25 sigma_k
    n = 1 << int(np.ceil(np.log2(2 * 5.2 * sk * 1.3 * sk / np.pi)))
    g = GridSpec(n, 5.2 * sk)
    assert g.xi_max >= 1.25 * sk
    n = EnergyConfig(0.9, 2.2, sk).order
    for a in range(n + 1):
        for b in range(n + 1):
            assert support_disjointness_defect(g, sk, a, b) == 0.0


def test_N_k_examples():
    assert compute_N_k(100, 0.5, 1.1) == 8
    assert compute_N_k(16, 0.5, 1.0) == 4
    with pytest.raises(LabError):
        compute_N_k(0.5, 0.5, 1.1)
    with pytest.raises(LabError):
        compute_N_k(100, 1.0, 1.1)


@given(st.floats(1.0, 1e6), st.floats(1.0, 1e6), st.floats(0.01, 0.99), st.floats(1.0, 5.0))
def test_N_k_monotone(a, b, lam, theta1):
    lo, hi = sorted((a, b))
    assert compute_N_k(lo, lam, theta1) <= compute_N_k(hi, lam, theta1)


def test_energy_zero_field():
    g = band_grid(20.0, 120.0)
    e, terms = compute_energy(g.zeros(), EnergyConfig(0.5, 2.2, 20.0))
    assert e == 0.0 and not terms.any()


def test_energy_single_term_lower_bound(phi):
    sk = 40.0
    pk = make_phi_k(phi, PacketSpec(1.0, 2.0, 0.0, 1.0, sk))
    e, terms = compute_energy(pk, EnergyConfig(0.9, 2.2, sk))
    assert e >= terms[0, 0] > 0


def test_energy_terms_match_direct_quantization():
    # small grid so the O(N^2) route is affordable
    sk = 6.0
    g = GridSpec(512, 48.0)
    u = band_packet(PacketSpec(1.0, 2.0, 0.0, 1.0, sk), g)
    terms = energy_terms(u, EnergyConfig(0.9, 1.5, sk, theta_h=1.2))
    for a, b in ((0, 0), (1, 0), (0, 1), (1, 1)):
        w, _, _ = make_localizers(g, sk, a, b)
        assert terms[a, b] == pytest.approx(l2_norm(quantize(w, u, method="direct")), rel=1e-12)


@pytest.mark.parametrize("n, L", [(2048, 256.0), (16384, 256.0)])
def test_energy_kills_off_band_fields(n, L, rng):
    sk = 40.0
    g = GridSpec(n, L)
    xi = g.frequencies
    keep = (np.abs(xi) < sk / 4) | (np.abs(xi) > 7 * sk / 4) | (xi < 0)
    c = np.where(keep, rng.standard_normal(n) + 1j * rng.standard_normal(n), 0)
    u = ill.inverse_transform(ill.Spectrum(g, c))
    e, _ = compute_energy(u, EnergyConfig(0.5, 2.2, sk))
    assert e <= 1e-6 * l2_norm(u)


def test_aggregation_consistency(rng):
    sk = 40.0
    g = band_grid(sk, 6 * sk)
    u = band_packet(PacketSpec(1.0, 2.0, 0.0, 1.0, sk), g)
    cfg = EnergyConfig(0.9, 2.2, sk)
    e, terms = compute_energy(u, cfg)
    from math import factorial
    n = terms.shape[0]
    ref = sum(terms[a, b] / (factorial(a) * factorial(b)) ** 2.2
              for a in range(n) for b in range(n))
    assert e == pytest.approx(ref, rel=1e-12)
    assert aggregate_energy(terms, 2.2) == e


def test_energy_trace_recomputes():
    sk = 20.0
    g = band_grid(sk, 6 * sk)
    u = band_packet(PacketSpec(1.0, 2.0, 0.0, 1.0, sk), g)
    rec = evolve(u, ModelParams(0.5), EvolutionConfig(0.002, 0.02, snapshot_stride=5,
                                                      max_phase=None))
    tr = energy_trace(rec.snapshots, EnergyConfig(0.5, 2.2, sk))
    assert np.allclose(tr.recomputed(), tr.E_k, rtol=1e-12, atol=0)
    assert list(tr.times) == pytest.approx([0.0, 0.01, 0.02])
    assert np.all(np.diff(tr.log_E()) > 0)


def _terms(sk, lam, theta1, theta_h=2.0):
    u = band_packet(PacketSpec(1.0, 2.0, 0.0, 1.0, sk), band_grid(sk, 6 * sk))
    return energy_terms(u, EnergyConfig(lam, theta1, sk, theta_h)), l2_norm(u)


def test_term_constant_uniform_in_k_at_fixed_order():
    cs = []
    for sk in (20.0, 40.0, 80.0):
        t, nrm = _terms(sk, 0.9, 2.2)
        cs.append(term_growth_constant(t[:4, :4], 2.0, nrm))
    assert all(b <= a * (1 + 1e-9) for a, b in zip(cs, cs[1:]))


def test_term_constant_uniform_in_k_full_order():
    # theta_h = 3.12 is the cutoff's fitted low-order Gevrey order
    cs = []
    for sk in (20.0, 40.0, 80.0):
        t, nrm = _terms(sk, 0.9, 3.5, 3.12)
        cs.append(term_growth_constant(t, 3.12, nrm))
    assert all(b <= a * (1 + 1e-9) for a, b in zip(cs, cs[1:]))


def test_term_constant_not_clamped():
    t = np.array([[0.1, 0.01], [0.01, 0.001]])
    assert term_growth_constant(t, 2.0, 1.0) == pytest.approx(0.1)


def test_initial_energy_bound():
    specs = [PacketSpec(1.0, 2.0, 0.0, 1.0, sk) for sk in (20.0, 40.0, 80.0)]
    rep = initial_energy_bound_check(specs)
    assert rep.rate > 0
    assert rep.relative_residual <= 0.05
    assert rep.lower_bound_holds
    assert all(np.isfinite(rep.log_E0))
    rep2 = initial_energy_bound_check([PacketSpec(2.0, 2.0, 0.0, 1.0, sk)
                                       for sk in (20.0, 40.0, 80.0)])
    assert rep2.rate > rep.rate


def test_initial_energy_spatial_weight_removed():
    base = initial_energy_bound_check([PacketSpec(1.0, 2.0, 0.0, 1.0, sk)
                                       for sk in (20.0, 40.0, 80.0)])
    weighted = initial_energy_bound_check([PacketSpec(1.0, 2.0, 0.5, 2.0, sk)
                                           for sk in (20.0, 40.0, 80.0)])
    assert weighted.rate == pytest.approx(base.rate, rel=1e-9)
    assert weighted.combination == pytest.approx(base.combination, rel=1e-9)


def test_initial_energy_needs_three_points():
    with pytest.raises(FitError):
        initial_energy_bound_check([PacketSpec(1.0, 2.0, 0.0, 1.0, 20.0)])


def test_band_packet_guards():
    spec = PacketSpec(1.0, 2.0, 0.0, 1.0, 20.0)
    with pytest.raises(ResolutionError):
        band_packet(spec, GridSpec(1024, 200.0))
    with pytest.raises(PreconditionError):
        band_packet(spec, GridSpec(512, 20.0))


def test_band_grid_shape():
    g = band_grid(40.0, 240.0)
    assert g.xi_max == pytest.approx(120.0)
    assert g.half_length >= 240.0
    assert g.num_points & (g.num_points - 1) == 0


def test_i2k_symbol_nonnegative():
    g = GridSpec(1024, 48.0)
    assert ill.i2k_symbol(g, 0.5, 6.0).min_real_part() >= 0.0


def test_growth_sigma0_exact():
    rep = growth_sweep(0.0, [10.0, 20.0, 40.0], exact=True)
    assert rep.p == pytest.approx(1.0, abs=0.1)
    assert not rep.dropped


def test_growth_sigma0_split_step_matches_exact():
    a = growth_point(20.0, 0.0, exact=True)
    b = growth_point(20.0, 0.0)
    assert b.growth == pytest.approx(a.growth, abs=1e-3)


def test_growth_drift_free():
    rep = growth_sweep(0.5, [20.0, 40.0, 80.0], drift=False)
    assert max(abs(pt.growth) for pt in rep.points) <= 0.1


def test_growth_dt_halving():
    a = growth_point(20.0, 0.5)
    b = growth_point(20.0, 0.5, dt=a.dt / 2)
    assert b.growth == pytest.approx(a.growth, abs=1e-6)


def test_growth_sweep_guards(monkeypatch):
    with pytest.raises(PreconditionError):
        growth_sweep(0.5, [20.0, 40.0, 80.0], lam=0.6)
    real = ill.growth_point

    def flaky(sk, *a, **kw):
        if sk == 40.0:
            raise EvolutionError("synthetic abort", 7)
        return real(sk, *a, **kw)
    monkeypatch.setattr(ill, "growth_point", flaky)
    rep = growth_sweep(0.0, [10.0, 20.0, 40.0, 80.0], exact=True)
    assert [sk for sk, _ in rep.dropped] == [40.0]
    assert [pt.sigma_k for pt in rep.points] == [10.0, 20.0, 80.0]
    with pytest.raises(FitError):
        growth_sweep(0.0, [10.0, 40.0, 20.0], exact=True)
