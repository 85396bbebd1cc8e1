"""Batch command-line front end; every subcommand writes data files only.

Files go to ``<out>/<command>/``, together with ``manifest.json`` holding the
parameters, seed, arguments and library versions.  Exit codes: 2 usage
error, 3 invalid configuration, 4 numerical failure (a ``diagnostic.json``
is written next to the outputs).
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import boundstate as bs
from . import harness, onephoton, spectroscopy, twophoton
from .pulsegrid import (FitError, PulseSpec, WindowError, gaussian_width, make_gaussian, peak_delay, pulse_grid,
                        write_waveform_csv)
from .qed_core import (PS_PER_NS, ParameterError, SystemParams, angular_to_ghz, default_config_path,
                       derive_rates, ghz_to_angular, load_params)

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 2, 3, 4
NUMERIC_ERRORS = (bs.SolverError, bs.ResolutionError, twophoton.ResolutionError, FitError,
                  spectroscopy.FitError, WindowError)


def _fmt(x) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _pulse(args, params: SystemParams) -> PulseSpec:
    params.require_emitter()
    return PulseSpec(args.sigma_gamma / params.Gamma)


def _grid(args, spec, params):
    return pulse_grid(spec.sigma, params if params.g > 0 else None, n_points=args.grid_points)


# --- subcommands ---------------------------------------------------------

def cmd_spectrum(args, params, out: Path) -> dict:
    kap = params.kappa
    g_v = ghz_to_angular(args.gv_ghz)
    split = ghz_to_angular(args.splitting_ghz)
    gamma = ghz_to_angular(args.emitter_loss_ghz) if args.emitter_loss_ghz is not None else params.gamma
    cav = spectroscopy.PolarizedCavityParams(0.0, split, params.g, g_v, kap, gamma)
    dL = ghz_to_angular(np.linspace(-args.span_ghz, args.span_ghz, args.points))
    dC = ghz_to_angular(np.linspace(-args.span_ghz, args.span_ghz, args.points))
    for name, pol in spectroscopy.PRESETS.items():
        m = spectroscopy.reflection_map(dL, dC, pol, cav, split)
        rows = [(angular_to_ghz(c), angular_to_ghz(l), m[i, j])
                for i, c in enumerate(dC) for j, l in enumerate(dL)]
        _write_csv(out / f"{name}_map.csv", ["delta_c_ghz", "detuning_ghz", "intensity"], rows)
    # empty cavity: cross-polarized signal, and the two mode occupations fitted with two Lorentzians
    bare = spectroscopy.PolarizedCavityParams(0.0, split, 0.0, 0.0, kap, gamma)
    wide = np.linspace(min(0.0, split) - 3 * kap, max(0.0, split) + 3 * kap, 4 * args.points)
    y = np.abs(spectroscopy.reflection_amplitude(wide, spectroscopy.CROSS_POLARIZED, bare)) ** 2
    spectroscopy.write_spectrum_csv(wide, y, out / "cavity_scan.csv")
    occ = (np.abs(spectroscopy.mode_transmission(0.0, wide, kap)) ** 2
           + np.abs(spectroscopy.mode_transmission(split, wide, kap)) ** 2)
    spectroscopy.write_spectrum_csv(wide, occ, out / "mode_occupation.csv")
    fit = spectroscopy.fit_double_lorentzian(angular_to_ghz(wide), occ)
    spectroscopy.write_fit_json(fit, out / "cavity_fit.json")
    return {"splitting_ghz": fit.splitting, "fwhm_ghz": [ln.fwhm for ln in fit.lines]}


def cmd_pulse1(args, params, out: Path) -> dict:
    spec = _pulse(args, params)
    grid = _grid(args, spec, params)
    inp = make_gaussian(spec, grid)
    res = onephoton.scatter_single(inp, params)
    write_waveform_csv(res, out / "output.csv")
    write_waveform_csv(inp, out / "input.csv")
    g1 = res.intensity()
    _write_csv(out / "g1.csv", ["t_ps", "g1", "input"],
               zip(grid.points * PS_PER_NS, g1 / g1.max(), inp.intensity() / inp.intensity().max()))
    fit = gaussian_width(res)
    summary = {"delay_ps": peak_delay(res, 0.0) * PS_PER_NS, "sigma_fit_ps": fit.sigma_fit * PS_PER_NS,
               "fit_residual": fit.fit_residual, "sigma_gamma": args.sigma_gamma,
               "long_pulse_delay_ps": onephoton.phase_d1(0.0, params) * PS_PER_NS}
    _write_json(out / "delays.json", summary)
    return summary


def cmd_pulse2(args, params, out: Path) -> dict:
    spec = _pulse(args, params)
    grid = _grid(args, spec, params)
    obs = harness.observables(spec, params, n_bar=args.n_bar, grid=grid)
    psi2 = obs.output.psi2
    twophoton.write_map(psi2, out / "psi2_map", {"sigma_gamma": args.sigma_gamma})
    twophoton.write_diagonal_csv(psi2, out / "g2_diagonal.csv")
    _write_csv(out / "g1.csv", ["t_ps", "g1"], zip(grid.points * PS_PER_NS, obs.G1))
    summary = {"tau1_ps": obs.delays["tau1"] * PS_PER_NS, "tau2_ps": obs.delays["tau2"] * PS_PER_NS,
               "cavity_ps": 4.0 / params.kappa * PS_PER_NS, "sigma_gamma": args.sigma_gamma}
    if args.pulses > 0:
        co = harness.CoherentOutput(args.tag_n_bar, obs.output.psi1, psi2)
        tags = harness.sample_tags(co, args.pulses, args.seed, workers=args.threads)
        harness.write_ptag(tags, out / "tags.ptag")
        edges = harness.histogram_edges(grid, 8)
        cmap = harness.correlate(tags, edges)
        _write_json(out / "coincidences.json", {
            "edges_ps": (edges * PS_PER_NS).tolist(), "counts": cmap.counts.astype(int).tolist(),
            "period_ps": tags.period_ps, "origin_ps": tags.origin * PS_PER_NS,
            "n_pulses": tags.n_pulses, "n_single": tags.n_single, "n_pair": tags.n_pair})
        summary["chi2_per_bin"] = harness.chi2_per_bin(cmap.counts, harness.expected_pair_map(psi2, edges))
    _write_json(out / "delays.json", summary)
    return summary


def cmd_dispersion(args, params, out: Path) -> dict:
    spec = _pulse(args, params)
    G = params.Gamma
    det = np.linspace(-args.span_gamma * G, args.span_gamma * G, args.points)
    scan = onephoton.dispersion_scan(spec, params, det, _grid(args, spec, params))
    onephoton.write_scan_csv(scan, out / "dispersion.csv")
    prof = np.array([r.profile for r in scan.rows])
    np.ascontiguousarray(prof, dtype="<f8").tofile(out / "profiles.bin")
    _write_json(out / "profiles.json", {"shape": list(prof.shape), "dtype": "<f8", "order": "row-major",
                                        "t_ps": (scan.times * PS_PER_NS).tolist(),
                                        "delta_L_ghz": [angular_to_ghz(r.delta_l) for r in scan.rows]})
    return {"max_delay_ps": float(scan.delays().max() * PS_PER_NS)}


def cmd_bound(args, params, out: Path) -> dict:
    params.require_emitter()
    G = params.Gamma
    lo, hi = bs.branch_window(params)
    E = np.linspace(lo, hi, args.points + 2)[1:-1]
    sols = bs.solve_branch(E, params)
    bs.write_solutions_json(sols, out / "bound_states.json", params)
    _write_csv(out / "t_bound.csv", ["E_ghz", "re", "im", "phase"],
               [(angular_to_ghz(s.E), s.lam.real, s.lam.imag, float(np.angle(s.lam))) for s in sols if s])
    ph = bs.phiB_derivatives(0.0, params)
    single = onephoton.phase_derivatives(0.0, params)
    summary = {"branch_ghz": [angular_to_ghz(lo), angular_to_ghz(hi)],
               "delay_ps": ph.d1 * PS_PER_NS, "delay_perturbative_ps": bs.perturbative_delay(params) * PS_PER_NS,
               "d3_ps3": ph.d3 * PS_PER_NS ** 3,
               "d3_perturbative_ps3": bs.perturbative_distortion(params) * PS_PER_NS ** 3,
               "d3_ratio_single_over_bound": single.d3 / ph.d3,
               "kappa_over_gamma": params.kappa / G}
    _write_json(out / "delays.json", summary)
    return summary


def cmd_overlap(args, params, out: Path) -> dict:
    params.require_emitter()
    sg = np.geomspace(args.min_sigma_gamma, args.max_sigma_gamma, args.points)
    frac = bs.bound_fraction_curve(sg, params, workers=args.threads)
    bs.write_fraction_csv(sg, frac, out / "bound_fraction.csv", params)
    summary = {"argmax_sigma_gamma": float(sg[int(np.argmax(frac))]), "max_fraction": float(frac.max())}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_cavity_delay(args, params, out: Path) -> dict:
    kap = params.kappa
    det = np.linspace(-args.span_kappa * kap, args.span_kappa * kap, args.points)
    bare = params.replace(g=0.0, delta_c=0.0)
    formula = spectroscopy.cavity_wigner_delay(det, 0.0, kap)
    phase = onephoton.phase_d1(det, bare)
    _write_csv(out / "cavity_delay.csv", ["detuning_ghz", "delay_ps", "phase_derivative_ps"],
               zip(angular_to_ghz(det), formula * PS_PER_NS, np.real(phase) * PS_PER_NS))
    summary = {"resonant_delay_ps": 4.0 / kap * PS_PER_NS}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_saturation(args, params, out: Path) -> dict:
    params.require_emitter()
    rates = derive_rates(params)
    n_c = args.n_crit if args.n_crit is not None else rates.n_crit
    tau0 = args.tau0_ps if args.tau0_ps is not None else onephoton.phase_d1(0.0, params) * PS_PER_NS
    tauinf = args.tauinf_ps if args.tauinf_ps is not None else 4.0 / params.kappa * PS_PER_NS
    n = np.concatenate([[0.0], np.geomspace(1e-3 * n_c, 1e3 * n_c, args.points - 1)])
    r = spectroscopy.saturation_delay(n, n_c, tau0, tauinf)
    _write_csv(out / "saturation.csv", ["n_bar", "delay_ratio", "delay_ps"], zip(n, r, r * tau0))
    summary = {"n_crit": n_c, "tau0_ps": tau0, "tauinf_ps": tauinf}
    _write_json(out / "summary.json", summary)
    return summary


COMMANDS = {
    "spectrum": cmd_spectrum, "pulse1": cmd_pulse1, "pulse2": cmd_pulse2, "dispersion": cmd_dispersion,
    "bound": cmd_bound, "overlap": cmd_overlap, "cavity-delay": cmd_cavity_delay, "saturation": cmd_saturation,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="parameter JSON (default: packaged device values)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output root directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--grid-points", type=int, default=512, help="time-lattice size (power of two)")
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="cavitydimer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("spectrum", parents=[common], help="CW reflection maps and cavity-mode fit")
    s.add_argument("--gv-ghz", type=float, default=2.55, help="coupling to the V mode")
    s.add_argument("--splitting-ghz", type=float, default=-58.8, help="V minus H mode frequency")
    s.add_argument("--emitter-loss-ghz", type=float, default=None, help="overrides gamma from the config")
    s.add_argument("--span-ghz", type=float, default=80.0)
    s.add_argument("--points", type=int, default=161)

    for name, hlp in (("pulse1", "single-photon output pulse"), ("pulse2", "two-photon output and G2 map"),
                      ("dispersion", "delay and profile versus laser detuning")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--sigma-gamma", type=float, default=2.2)
        if name == "pulse2":
            s.add_argument("--n-bar", type=float, default=0.01)
            s.add_argument("--pulses", type=int, default=0, help="also sample this many pulses of time tags")
            s.add_argument("--tag-n-bar", type=float, default=0.5, help="mean photon number for tag sampling")
        if name == "dispersion":
            s.add_argument("--span-gamma", type=float, default=3.0)
            s.add_argument("--points", type=int, default=61)

    s = sub.add_parser("bound", parents=[common], help="bound-state table, t_B and delays")
    s.add_argument("--points", type=int, default=41)
    s = sub.add_parser("overlap", parents=[common], help="bound fraction versus pulse width")
    s.add_argument("--min-sigma-gamma", type=float, default=0.2)
    s.add_argument("--max-sigma-gamma", type=float, default=30.0)
    s.add_argument("--points", type=int, default=20)
    s = sub.add_parser("cavity-delay", parents=[common], help="empty-cavity delay versus detuning")
    s.add_argument("--span-kappa", type=float, default=2.0)
    s.add_argument("--points", type=int, default=81)
    s = sub.add_parser("saturation", parents=[common], help="delay versus mean photon number")
    s.add_argument("--n-crit", type=float, default=None)
    s.add_argument("--tau0-ps", type=float, default=None)
    s.add_argument("--tauinf-ps", type=float, default=None)
    s.add_argument("--points", type=int, default=61)
    return p


def _manifest(args, params, summary) -> dict:
    return {
        "command": args.command,
        "params": params.to_ghz_dict(),
        "seed": args.seed,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())},
        "versions": {"cavitydimer": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "summary": summary,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    cfg = args.config if args.config is not None else default_config_path()
    try:
        params = load_params(cfg)
        if args.grid_points < 16 or args.grid_points & (args.grid_points - 1):
            raise ParameterError("--grid-points must be a power of two >= 16")
        if args.threads < 1:
            raise ParameterError("--threads must be at least 1")
    except (ParameterError, OSError) as exc:
        print(f"cavitydimer: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out / args.command
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = COMMANDS[args.command](args, params, out)
    except ParameterError as exc:
        print(f"cavitydimer: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("trajectory", "trace", "residual"):
            if getattr(exc, attr, None) is not None:
                diag[attr] = getattr(exc, attr)
        _write_json(out / "diagnostic.json", diag)
        print(f"cavitydimer: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_json(out / "manifest.json", _manifest(args, params, summary))
    return 0


def main() -> None:
    sys.exit(run())
