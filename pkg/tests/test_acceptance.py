"""Acceptance criteria 1-11; each test records a PASS/FAIL line printed at the end of the run."""
import time

import numpy as np
import pytest

from cavitydimer import boundstate as bs
from cavitydimer import harness as hs
from cavitydimer import onephoton as op
from cavitydimer.pulsegrid import PulseSpec, SampledWaveform, make_gaussian, peak_delay, pulse_grid, to_spectrum, to_time
from cavitydimer.qed_core import SystemParams, ghz_to_angular, device_params, scaled_params
from cavitydimer.spectroscopy import cavity_wigner_delay
from cavitydimer.twophoton import default_spectral_grid, scatter_two, spectral_norm

from conftest import ACCEPTANCE

PS = 1e3


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


def test_criterion_01_long_pulse_delay():
    p = scaled_params(device_params().kappa / device_params().Gamma)
    spec = PulseSpec(20.0 / p.Gamma)
    t0 = time.perf_counter()
    out = op.scatter_single(make_gaussian(spec, pulse_grid(spec.sigma, p)), p)
    delay = peak_delay(out, 0.0) * PS
    dt = time.perf_counter() - t0
    record(1, abs(delay - 150.0) <= 1.5 and dt < 1.0, f"delay {delay:.3f} ps (150 +- 1.5), {dt:.3f} s")


def test_criterion_02_cavity_delay():
    parts, ok = [], True
    for nu, expect in ((20.6, 30.9), (21.6, 29.5)):
        kap = ghz_to_angular(nu)
        formula = float(cavity_wigner_delay(0.0, 0.0, kap)) * PS
        phase = float(op.phase_d1(0.0, SystemParams(g=0.0, kappa=kap))) * PS
        ok &= abs(formula - expect) <= 0.3 and abs(phase - expect) <= 0.3
        parts.append(f"{nu} GHz: {formula:.3f}/{phase:.3f} ps ({expect} +- 0.3)")
    record(2, ok, "; ".join(parts))


def test_criterion_03_bound_state_delay():
    device, k20 = device_params(), scaled_params(20.0)
    d_device = bs.phiB_derivatives(0.0, device).d1
    d_k20 = bs.phiB_derivatives(0.0, k20).d1
    e_device = abs(d_device / (1 / device.Gamma + 3 / device.kappa) - 1)
    e_k20 = abs(d_k20 / (1 / k20.Gamma + 3 / k20.kappa) - 1)
    worst_res, worst_fact = 0.0, 0.0
    for p in (device, k20):
        lo, hi = bs.branch_window(p)
        for s in bs.solve_branch(np.linspace(lo, hi, 43)[1:-1], p):
            worst_res = max(worst_res, s.residual)
            # lam is stored from the delta1 pair; the delta2 pair and the rational form are independent
            tt = complex(op.t1(s.E / 2 + s.delta2, p) * op.t1(s.E / 2 - s.delta2, p))
            worst_fact = max(worst_fact, abs(s.lam - tt), abs(s.lam - bs.eigenvalue_rational(s.E, s.delta1, p)))
    ok = e_device < 0.10 and e_k20 < 0.02 and worst_res < 1e-10 and worst_fact < 1e-9
    record(3, ok, f"phiB' {d_device * PS:.2f} ps (err {e_device:.3f}), kappa=20G err {e_k20:.4f}; "
                  f"max residual {worst_res:.1e}, max |lam - t t| {worst_fact:.1e}")


def test_criterion_04_distortion_ratio():
    p = scaled_params(20.0)
    closed = bs.perturbative_single_distortion(p) / bs.perturbative_distortion(p)
    numeric = float(op.phase_d3_exact(0.0, p)) / bs.phiB_derivatives(0.0, p).d3
    ok = abs(closed - 64.0) < 1e-12 * 64 and abs(numeric / 64.0 - 1) < 0.20
    record(4, ok, f"closed form {closed!r}, numerical {numeric:.2f} (64 +- 20%)")


def test_criterion_05_distortion_null():
    p = scaled_params(3.0)
    G = p.Gamma
    exact = abs(float(op.phase_d3_exact(0.0, p)))
    fd = abs(op.phase_derivatives(0.0, p).d3)
    bound = 1e-6 * 32 / G ** 3
    record(5, exact < bound and fd < bound, f"|d3(0)| {exact:.1e} exact, {fd:.1e} differenced (< {bound:.1e})")


def test_criterion_06_bound_fraction_curve():
    p = device_params()
    sg = np.geomspace(0.2, 30.0, 20)
    t0 = time.perf_counter()
    frac = bs.bound_fraction_curve(sg, p)
    dt = time.perf_counter() - t0
    i = int(np.argmax(frac))
    unimodal = np.all(np.diff(frac[: i + 1]) > 0) and np.all(np.diff(frac[i:]) < 0)
    ok = unimodal and 0.5 <= sg[i] <= 3.0 and dt < 300
    record(6, ok, f"argmax sigma*Gamma {sg[i]:.3f}, peak fraction {frac[i]:.4f}, unimodal {unimodal}, {dt:.1f} s")


def test_criterion_07_cross_path():
    p = device_params()
    spec = PulseSpec(2.2 / p.Gamma)
    grid = pulse_grid(spec.sigma, p, n_points=512)
    E = bs.default_E_grid(spec.sigma, p)
    expanded = bs.project_and_scatter(make_gaussian(spec, grid), p, E_grid=E).bound_psi.psi
    exact = bs.bound_projection(scatter_two(spec, p, grid=grid).psi, p, E_grid=E).bound_psi.psi
    d = np.linalg.norm(exact - expanded) / np.linalg.norm(expanded)
    record(7, d <= 0.02, f"relative L2 difference {d:.2e} on 512^2 (<= 2%)")


def test_criterion_08_unitarity_and_symmetry():
    rng = np.random.default_rng(8)
    p = device_params()
    G = p.Gamma
    k = rng.uniform(-50, 50, 10_000) * G
    t1_err = np.max(np.abs(np.abs(op.t1(k, p)) - 1))
    spec = PulseSpec(2.2 / G)
    psi = scatter_two(spec, p, grid=pulse_grid(spec.sigma, p, n_points=1024)).psi
    norm_err = abs(psi.norm2() - 1)
    spec_norm_err = abs(spectral_norm(spec, p, default_spectral_grid(spec.sigma)) - 1)
    sym_err = psi.symmetry_error()
    grid = pulse_grid(spec.sigma, p)
    w = SampledWaveform(grid, rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))
    back = to_time(to_spectrum(w))
    rt_err = np.max(np.abs(back.amps - w.amps)) / np.max(np.abs(w.amps))
    ok = t1_err < 1e-12 and norm_err < 1e-6 and spec_norm_err < 1e-6 and sym_err < 1e-10 and rt_err < 1e-12
    record(8, ok, f"|t1|-1 {t1_err:.1e}; norm {norm_err:.1e} lattice, {spec_norm_err:.1e} spectral; "
                  f"symmetry {sym_err:.1e}; round trip {rt_err:.1e}")


def _central_phase_derivatives(k, p, h):
    """Richardson-extrapolated central differences of the unwrapped phase of t1."""
    def ang(a, b):
        return np.angle(op.t1(a, p) / op.t1(b, p))

    def d1(s):
        return ang(k + s, k - s) / (2 * s)

    def d2(s):
        return (ang(k + s, k) - ang(k, k - s)) / (s * s)

    return (4 * d1(h / 2) - d1(h)) / 3, (4 * d2(h / 2) - d2(h)) / 3


def test_criterion_09_finite_difference_oracles():
    p = device_params()
    G = p.Gamma
    k = np.linspace(-3, 3, 100) * G
    fd1, fd2 = _central_phase_derivatives(k, p, 1e-3 * G)
    e1 = np.max(np.abs(fd1 / op.phase_d1(k, p) - 1))
    e2 = np.max(np.abs(fd2 / op.phase_d2(k, p) - 1))
    record(9, e1 < 1e-7 and e2 < 1e-7, f"max relative error phi' {e1:.1e}, phi'' {e2:.1e} over 100 detunings")


def test_criterion_10_statistical_pipeline():
    p = device_params()
    spec = PulseSpec(2.2 / p.Gamma)
    co = hs.coherent_output(spec, p, 0.5, pulse_grid(spec.sigma, p, n_points=512))
    edges = hs.histogram_edges(co.psi1.grid, 8)
    runs = [hs.sample_tags(co, 1_000_000, seed=2024, workers=w) for w in (1, 1, 4)]
    identical = all(r.records.tobytes() == runs[0].records.tobytes() for r in runs[1:])
    counts = hs.correlate(runs[0], edges).counts
    chi2 = hs.chi2_per_bin(counts, hs.expected_pair_map(co.psi2, edges))
    record(10, chi2 < 2 and identical,
           f"chi2/bin {chi2:.3f} over {int(counts.sum())} coincidences, byte-identical reruns {identical}")


def test_criterion_11_delay_ordering():
    p = device_params()
    spec = PulseSpec(2.2 / p.Gamma)
    obs = hs.observables(spec, p)
    cav = hs.observables(spec, SystemParams(g=0.0, kappa=p.kappa)).delays["tau1"]
    t1_, t2_ = obs.delays["tau1"], obs.delays["tau2"]
    record(11, t1_ > t2_ > cav,
           f"tau1 {t1_ * PS:.2f} > tau2 {t2_ * PS:.2f} > tau_C {cav * PS:.2f} ps "
           f"(measured 144.02, 66.45, three-photon 45.51 ps; context only)")
