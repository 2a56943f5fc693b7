"""Experiment runners behind the ``lab`` command.

Each runner takes an ExperimentConfig and a Recorder, writes its CSV and
plot-data files through the recorder, and registers one Assertion per
tolerance check it actually performed.
"""

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from . import __version__
from . import conjugation as conj
from . import illposedness as ill
from . import multiplier as mult
from . import psido
from .evolution import free_propagate
from .grid import Field, GridSpec, apply_fourier_multiplier, l2_norm
from .gs_spaces import DecayFit, fit_decay_exponent


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    status: str = "running"
    error: str = ""
    partial: bool = False
    elapsed: float = 0.0

    @property
    def all_passed(self):
        return all(a.passed for a in self.assertions)

    def to_json(self):
        return json.dumps({
            "config": self.config,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "error": self.error,
            "partial": self.partial,
            "elapsed_seconds": self.elapsed,
            "outputs": self.outputs,
            "assertions": [{"name": a.name, "passed": a.passed, "detail": a.detail}
                           for a in self.assertions],
        }, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return str(v)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Recorder:
    """Single writer for one run's output directory."""

    def __init__(self, out_dir, config_hash):
        self.out_dir = out_dir
        self.config_hash = config_hash
        self.outputs = {}
        self.assertions = []
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, name):
        return os.path.join(self.out_dir, name)

    def _register(self, name):
        self.outputs[name] = _sha256(self._path(name))

    def csv(self, name, header, rows):
        with open(self._path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self._register(name)

    def plotdata(self, name, columns, rows):
        with open(self._path(name), "w", encoding="utf-8") as fh:
            fh.write(f"# columns: {' '.join(columns)}\n")
            fh.write(f"# config_hash: {self.config_hash}\n")
            for row in rows:
                fh.write(" ".join(_fmt(float(v)) for v in row) + "\n")
        self._register(name)

    def check(self, name, passed, detail=""):
        self.assertions.append(Assertion(name, bool(passed), detail))
        return bool(passed)


def plotdata_rows(obj):
    """(columns, rows) for an EnergyTrace, SweepReport or (DecayFit, Field) pair."""
    if isinstance(obj, ill.EnergyTrace):
        return ("t", "log_E_k"), list(zip(obj.times, obj.log_E()))
    if isinstance(obj, ill.SweepReport):
        return (("sigma_k", "logET_minus_logE0"),
                [(p.sigma_k, p.growth) for p in obj.points])
    fit, u = obj
    lo, hi = fit.window
    r = np.abs(u.grid.x)
    keep = (r >= lo) & (r <= hi) & (r > 0) & (np.abs(u.values) > 1e-300)
    rr = r[keep]
    model = np.log(fit.amplitude) - fit.power * np.log(rr) - fit.rate * rr ** fit.inverse_order
    return ("x", "log_abs_u", "fitted_model"), list(zip(u.grid.x[keep], np.log(np.abs(u.values[keep])), model))


def emit_plotdata(rec, name, obj):
    columns, rows = plotdata_rows(obj)
    rec.plotdata(name, columns, rows)


# ------------------------------------------------------------------ runners


def free_solution(theta, rho0, t, grid, oversample=32):
    """exp(i t d_x^2) phi sampled on ``grid``, computed on an oversampled grid.

    The fine grid has the same L and ``oversample`` times the points, so it
    contains every node of ``grid``; phi-hat is resolved there and the
    result is restricted back.
    """
    fine = GridSpec(grid.num_points * oversample, grid.half_length)
    phi = ill.make_phi(rho0, theta, fine)
    u = free_propagate(phi, t) if t else phi
    return Field(grid, u.values[::oversample])


def run_free_decay(cfg, rec):
    p = cfg.parameters
    grid = GridSpec(p["num_points"], p["half_length"])
    rows = []
    for t in p["times"]:
        u = free_solution(p["theta"], p["rho0"], t, grid, p["oversample"])
        fit = fit_decay_exponent(u)
        rows.append((t,) + fit.csv_row() + (fit.power,))
        emit_plotdata(rec, f"decay_t{t:g}.dat", (fit, u))
        target, tol = (1.0, 0.05) if t == 0 else (1.0 / p["theta"], 0.1)
        rec.check(f"inverse_order(t={t:g}) within {tol} of {target:g}",
                  abs(fit.inverse_order - target) <= tol,
                  f"fitted {fit.inverse_order:.6f}")
    rec.csv("decay_fits.csv", ("t",) + DecayFit.CSV_HEADER + ("power",), rows)


def run_growth_sweep(cfg, rec):
    p = cfg.parameters
    sigma = p["sigma"]
    rep = ill.growth_sweep(
        sigma, p["sigma_k_list"], T_star=p["T_star"], rho0=p["rho0"], theta=p["theta"],
        rho2=p["rho2"], s=p["s"], lam=p["lambda"], theta1=p["theta1"],
        theta_h=p["theta_h"], drift=p["drift"], exact=p["exact"])
    rows = [pt.csv_row() for pt in rep.points]
    rec.csv("growth_sweep.csv", ill.SweepPoint.CSV_HEADER, rows)
    rec.csv("growth_summary.csv", ("model_sigma", "p", "c", "residual", "dropped"),
            [(sigma, rep.p, rep.c, rep.residual,
              ";".join(f"{sk:g}" for sk, _ in rep.dropped))])
    emit_plotdata(rec, "growth.dat", rep)
    for pt in rep.points:
        if pt.flag:
            rec.check(f"sigma_k={pt.sigma_k:g} not truncated", False, pt.flag)
    if not p["drift"]:
        worst = max(abs(pt.growth) for pt in rep.points)
        rec.check("drift-free |logET - logE0| <= 0.1", worst <= 0.1, f"max {worst:.4g}")
    else:
        target = 1.0 - sigma
        rec.check(f"|p - {target:g}| <= {p['tolerance']:g}",
                  abs(rep.p - target) <= p["tolerance"], f"fitted p = {rep.p:.4f}")
    rec.check("no dropped points", not rep.dropped, str(rep.dropped))
    return rep


def _decay_coefficient(sigma):
    return conj.CoefficientSpec(lambda t, x: -1j * x * (1 + x * x) ** (-(sigma + 1) / 2),
                                lambda t, x: np.zeros_like(x), sigma=sigma)


def run_conjugate_check(cfg, rec):
    p = cfg.parameters
    delta = p["delta"]
    g = GridSpec(p["num_points"], p["half_length"])
    u = Field(g, np.exp(-0.5 * g.x**2) * (1 + 0.3 * g.x))
    rows = []
    for s in p["s_list"]:
        for sigma in p["sigma_list"]:
            spec = conj.CoefficientSpec(lambda t, x, sg=sigma: 1j * (1 + x * x) ** (-sg / 2),
                                        lambda t, x: 0.1 * np.exp(-x * x), sigma=sigma)
            cc = conj.conjugate_coefficients(spec, delta, s, 0.0, g)
            shift = cc.a_delta.values - cc.a.values
            expect = -2j * delta * conj.bracket_weight_derivatives(g.x, s, 1)
            shift_err = float(np.max(np.abs(shift - expect)))
            res = conj.conjugation_residual(spec, delta, s, u)
            rows.append((sigma, s, delta, shift_err, float(np.max(np.abs(shift.real))), res))
            rec.check(f"shift identity sigma={sigma:g} s={s:g}",
                      shift_err <= 1e-12 and np.all(shift.real == 0), f"{shift_err:.3e}")
            rec.check(f"residual sigma={sigma:g} s={s:g} <= 1e-8", res <= 1e-8, f"{res:.3e}")
    rec.csv("conjugation_residual.csv",
            ("sigma", "s", "delta", "shift_defect", "shift_real_part", "residual"), rows)

    gd = GridSpec(p["decay_num_points"], p["decay_half_length"])
    reps = []
    for sigma in p["sigma_list"]:
        for s in p["s_list"]:
            cc = conj.conjugate_coefficients(_decay_coefficient(sigma), delta, s, 0.0, gd)
            r = conj.verify_imag_decay(cc, sigma)
            reps.append(r)
            rec.check(f"imag decay sigma={sigma:g} s={s:g}", r.holds,
                      f"q = {r.fitted_q:.4f}, bound {r.bound_q:.4f}")
    rec.csv("imag_decay.csv", conj.ImagDecayReport.CSV_HEADER + ("holds",),
            [r.csv_row() + (r.holds,) for r in reps])


def run_multiplier_check(cfg, rec):
    p = cfg.parameters
    theta, s, t = p["theta"], p["s"], p["t"]
    amax = p["alpha_max"]
    seq = mult.p_alpha_sequence(amax, t)
    same = all(mult.p_alpha_direct(a, t) == seq[a] for a in range(amax + 1))
    rec.check(f"P_alpha direct == recurrence for alpha <= {amax}", same)
    rec.check("P_alpha parity and degree", all(q.parity_ok() and q.degree == q.alpha for q in seq))

    rows = []
    ok_sum = ok_dec = True
    for a in range(amax + 1):
        res = mult.even_partial_sum_check(a, theta)
        dec = a < 2 or mult.WeightedSeq.build(a, theta).strictly_decreasing
        ok_sum &= res.holds
        ok_dec &= dec
        rows.append((a, res.value.a, res.value.b, res.holds, dec))
    rec.csv("partial_sums.csv", ("alpha", "sum_lower", "sum_upper", "ge_3_4", "decreasing"),
            [(a, str(lo), str(hi), h, d) for a, lo, hi, h, d in rows])
    rec.check("even partial sum >= 3/4", ok_sum)
    rec.check("weighted sequence strictly decreasing", ok_dec)

    brows = []
    ok_b = True
    for a in range(1, min(amax, 100) + 1):
        try:
            v = mult.packet_lower_bound_check(a, t, theta, polys=seq)
        except mult.PreconditionError:
            continue
        ok_b &= bool(v)
        brows.append((a, str(v.lhs.a), str(v.rhs.b), v.holds, v.bits))
    rec.csv("packet_bound.csv", ("alpha", "lhs_lower", "rhs_upper", "holds", "bits"), brows)
    rec.check("packet lower bound certified", ok_b and bool(brows))

    rep = mult.find_violation(theta, s, t, p["A"], p["B"], p["a"], amax, bits=p["bits"])
    rep2 = mult.find_violation(theta, s, t, p["A"], p["B"], p["a"], amax, bits=2 * p["bits"])
    rec.csv("violation.csv", mult.ViolationReport.CSV_HEADER, [rep.csv_row(), rep2.csv_row()])
    rec.check("finite alpha_star", rep.alpha_star is not None, str(rep.alpha_star))
    rec.check("alpha_star stable under precision doubling",
              rep.alpha_star == rep2.alpha_star, f"{rep.alpha_star} vs {rep2.alpha_star}")
    return rep


def _packet_ensemble(grid, sigma_k):
    cen = [(x0, xi0) for x0 in np.linspace(sigma_k, 7 * sigma_k, 7)
           for xi0 in np.linspace(sigma_k / 4, 1.75 * sigma_k, 7)]
    return psido.gaussian_packets(grid, cen, width=np.sqrt(sigma_k) / 2)


def psido_selftest(num_points_list, sigma=0.5, ensemble_size=8, seed=0):
    """Rows (check, N, value, tolerance, passed) for the pseudodifferential self-test."""
    rows = []
    rng = np.random.default_rng(seed)
    for n in num_points_list:
        g = GridSpec(int(n), 20.0)
        us = psido.random_bandlimited(g, rng, count=ensemble_size)
        one = psido.SymbolGrid.separable(g, [(psido.Factor.constant(1.0),) * 2])
        xi = psido.SymbolGrid.separable(g, [(psido.Factor.constant(1.0), psido.Factor.monomial(1))],
                                        order=1.0)
        ax = psido.Factor(lambda t, k: np.real(1j**k * np.exp(1j * t)), 10**6, "cos")
        ap = psido.SymbolGrid.separable(g, [(ax, psido.Factor.constant(1.0))])
        for name, sym, ref in (
                ("identity", one, lambda u: u.values),
                ("xi_multiplier", xi, lambda u: apply_fourier_multiplier(u, lambda k: k).values),
                ("x_multiplication", ap, lambda u: np.cos(g.x) * u.values)):
            for method in ("direct", "separable"):
                err = max(float(np.linalg.norm(psido.quantize(sym, u, method=method).values - ref(u))
                                / np.linalg.norm(u.values)) for u in us)
                rows.append((f"quantize_{name}_{method}", int(n), err, 1e-12, err <= 1e-12))

    # composition: chirp o w_k at sigma_k = 40
    sk = 40.0
    g = GridSpec(16384, 256.0)
    w, _, _ = ill.make_localizers(g, sk)
    p1 = psido.SymbolGrid.separable(g, [(psido.Factor.constant(1.0), psido.Factor.chirp(1e-3))])
    u = psido.random_bandlimited(g, np.random.default_rng(seed), band=(0, 1.5 * sk),
                                 support=(3 * sk, 5 * sk))[0]
    exact = psido.quantize(p1, psido.quantize(w, u))
    prev = None
    for n in range(1, 5):
        q = psido.compose_truncated(p1, w, n)
        r = l2_norm(psido.quantize(q, u) - exact) / l2_norm(exact)
        ok = prev is None or r <= 0.5 * prev
        rows.append(("composition_residual_chirp_wk", n, r, 0.5, ok))
        prev = r

    # Garding lower bound on I_2k, same packet ensemble on every grid
    sk_small = 6.0
    vals = []
    for n in num_points_list:
        g = GridSpec(int(n), 48.0)
        val = psido.garding_lower_check(ill.i2k_symbol(g, sigma, sk_small),
                                        _packet_ensemble(g, sk_small))
        vals.append(val)
        rows.append(("garding_I2k_sigma_k6", int(n), val, float("nan"), np.isfinite(val)))
        wk, _, _ = ill.make_localizers(g, sk_small)
        ratio = psido.cv_bound_check(wk, _packet_ensemble(g, sk_small))
        rows.append(("cv_ratio_wk_sigma_k6", int(n), ratio, 10.0, ratio <= 10.0))
    spread = (max(vals) - min(vals)) / max(abs(v) for v in vals)
    rows.append(("garding_I2k_variation", 0, spread, 0.2, spread <= 0.2))
    return rows


def run_psido_selftest(cfg, rec):
    p = cfg.parameters
    rows = psido_selftest(p["num_points_list"], p["sigma"], p["ensemble_size"], cfg.seed)
    rec.csv("psido_selftest.csv", ("check", "N", "value", "tolerance", "passed"), rows)
    for name, n, val, tol, ok in rows:
        rec.check(f"{name} N={n}", ok, f"{val:.3e}")


def run_energy_initial(cfg, rec):
    p = cfg.parameters
    specs = [ill.PacketSpec(p["rho0"], p["theta"], p["rho2"], p["s"], sk)
             for sk in p["sigma_k_list"]]
    rep = ill.initial_energy_bound_check(specs, p["lambda"], p["theta1"], p["theta_h"])
    xs = [sk ** (1.0 / p["theta"]) for sk in rep.sigma_k]
    fitted = [rep.intercept - rep.rate * x for x in xs]
    rec.csv("energy_initial.csv", ("sigma_k", "logE0", "combination", "fitted"),
            list(zip(rep.sigma_k, rep.log_E0, rep.combination, fitted)))
    rec.plotdata("energy_initial.dat", ("sigma_k_pow_1_over_theta", "combination", "fitted"),
                 list(zip(xs, rep.combination, fitted)))
    rec.check("E_k(0) > 0", all(np.isfinite(rep.log_E0)))
    rec.check("fit residual <= 5% of range", rep.relative_residual <= 0.05,
              f"{rep.relative_residual:.4f}")
    rec.check("combination >= fit - 10%", rep.lower_bound_holds)
    return rep


RUNNERS = {
    "free-decay": run_free_decay,
    "growth-sweep": run_growth_sweep,
    "conjugate-check": run_conjugate_check,
    "multiplier-check": run_multiplier_check,
    "psido-selftest": run_psido_selftest,
    "energy-initial": run_energy_initial,
}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(cfg):
    """Run one experiment; always writes manifest.json, even on failure."""
    rec = Recorder(cfg.output_dir, cfg.config_hash())
    man = RunManifest(cfg.echo(), __version__, _now())
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.experiment](cfg, rec)
        man.status = "passed" if all(a.passed for a in rec.assertions) else "failed"
    except Exception as exc:
        man.status = "error"
        man.error = f"{cfg.experiment}: {type(exc).__name__}: {exc}"
        man.partial = True
        raise RunError(man, exc) from exc
    finally:
        man.assertions = rec.assertions
        man.outputs = dict(sorted(rec.outputs.items()))
        man.finished = _now()
        man.elapsed = round(time.perf_counter() - t0, 3)
        with open(os.path.join(cfg.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(man.to_json() + "\n")
    return man


class RunError(RuntimeError):
    """A module error raised inside an experiment, with the manifest attached."""

    def __init__(self, manifest, cause):
        super().__init__(manifest.error)
        self.manifest = manifest
        self.cause = cause
