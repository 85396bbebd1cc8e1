"""Single-photon transmission, scattering phase derivatives and pulse scattering."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .pulsegrid import (EDGE_TOL, Grid1D, PulseSpec, SampledWaveform, WindowError,
                        make_gaussian, peak_delay, peak_position, pulse_grid, to_spectrum, to_time)
from .qed_core import PS_PER_NS, SystemParams, angular_to_ghz


def _w(k, params: SystemParams):
    """Denominator of t1 as a polynomial ``w`` in k, with ``w'`` and ``w''``.

    The phase is ``-2 arg w`` up to a constant, so its derivatives follow
    from ``r = w'/w``.  For the bare cavity the factor ``k`` is cancelled.
    """
    k = np.asarray(k, dtype=float)
    if params.g == 0:
        return k - params.delta_c + 0.5j * params.kappa, np.ones_like(k), 0.0
    w = k * k - params.delta_c * k - params.g ** 2 + 0.5j * params.kappa * k
    return w, 2.0 * k - params.delta_c + 0.5j * params.kappa, 2.0


def t1(k, params: SystemParams):
    """Transmission coefficient at angular detuning ``k`` from the emitter.

    ``(D - i kappa k/2) / (D + i kappa k/2)`` with ``D = k^2 - delta_c k - g^2``.
    Accepts complex ``k`` as well (used for bound-state momenta).  For the
    bare cavity (``g = 0``) the common factor ``k`` is cancelled.
    """
    k = np.asarray(k)
    if params.g == 0:
        u = k - params.delta_c
        return (u - 0.5j * params.kappa) / (u + 0.5j * params.kappa)
    d = k * k - params.delta_c * k - params.g ** 2
    h = 0.5j * params.kappa * k
    # rescaling keeps subnormal d, h out of the complex division; both vanish
    # only at k = 0 when g^2 underflows, where the g > 0 limit is 1
    s = np.maximum(np.abs(d), np.abs(h))
    zero = s == 0
    e = -np.frexp(s)[1]
    dn = np.ldexp(np.real(d), e) + 1j * np.ldexp(np.imag(d), e)
    hn = np.ldexp(np.real(h), e) + 1j * np.ldexp(np.imag(h), e)
    with np.errstate(invalid="ignore"):
        return np.where(zero, 1.0 + 0j, (dn - hn) / (dn + hn))[()]


def transmission_poles(params: SystemParams) -> np.ndarray:
    """Poles of :func:`t1` in the complex k plane (lower half plane)."""
    return np.roots([1.0, -params.delta_c + 0.5j * params.kappa, -params.g ** 2])


def slowest_decay_rate(params: SystemParams) -> float:
    """Smallest ``|Im|`` among the poles of t1, i.e. the slowest tail of a scattered pulse."""
    if params.g == 0:
        return 0.5 * params.kappa
    return float(np.min(np.abs(transmission_poles(params).imag)))


def phase(k, params: SystemParams):
    """Scattering phase ``-i log t1``, continuous along ``k`` (unwrapped in order)."""
    phi = np.angle(t1(np.asarray(k, dtype=float), params))
    return np.unwrap(phi) if np.ndim(phi) else float(phi)


def phase_d1(k, params: SystemParams):
    w, wp, _ = _w(k, params)
    return -2.0 * np.imag(wp / w)


def phase_d2(k, params: SystemParams):
    w, wp, wpp = _w(k, params)
    return -2.0 * np.imag(wpp / w - (wp / w) ** 2)


def phase_d3_exact(k, params: SystemParams):
    """Closed-form third derivative of the phase (reference value for tests and docs)."""
    w, wp, wpp = _w(k, params)
    r = wp / w
    return -2.0 * np.imag(-3.0 * wpp * r / w + 2.0 * r ** 3)


def richardson_derivative(f, x, h):
    """Central difference of ``f`` at ``x`` with one Richardson step (error O(h^4))."""
    d_h = (f(x + h) - f(x - h)) / (2.0 * h)
    d_h2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h
    return (4.0 * d_h2 - d_h) / 3.0


@dataclass(frozen=True)
class PhaseDerivatives:
    phi: float
    d1: float
    d2: float
    d3: float


def phase_derivatives(k, params: SystemParams, h: float | None = None) -> PhaseDerivatives:
    """Phase, delay ``d1``, chirp ``d2`` and distortion ``d3`` at detuning ``k``.

    ``d1`` and ``d2`` are closed form; ``d3`` is the Richardson-extrapolated
    central difference of ``d2`` with step ``h`` (default Gamma/200).
    """
    if h is None:
        params.require_emitter()
        h = params.Gamma / 200.0
    k = float(k)
    d3 = richardson_derivative(lambda x: phase_d2(x, params), k, h)
    return PhaseDerivatives(float(phase(k, params)), float(phase_d1(k, params)),
                            float(phase_d2(k, params)), float(d3))


def check_window(w: SampledWaveform, what: str = "output"):
    r = w.edge_ratio()
    if r > EDGE_TOL:
        raise WindowError(f"{what} touches the grid boundary ({r:.2e} of peak); enlarge the window")


def scatter_single(pulse: SampledWaveform, params: SystemParams, check: bool = True) -> SampledWaveform:
    """Scatter a one-photon pulse: multiply its spectrum by t1 and transform back."""
    spec = to_spectrum(pulse)
    out_spec = SampledWaveform(spec.grid, spec.amps * t1(spec.axis, params), "frequency", spec.ref)
    out = to_time(out_spec)
    if check:
        check_window(out)
    return out


@dataclass(frozen=True)
class DispersionRow:
    delta_l: float
    delay: float
    d1: float
    d2: float
    d3: float
    profile: np.ndarray


@dataclass(frozen=True)
class DispersionScan:
    times: np.ndarray
    rows: list

    def delays(self) -> np.ndarray:
        return np.array([r.delay for r in self.rows])


def dispersion_scan(spec: PulseSpec, params: SystemParams, detunings, grid: Grid1D | None = None) -> DispersionScan:
    """Peak delay and normalized G1(t) profile for each laser detuning (sorted)."""
    if grid is None:
        grid = pulse_grid(spec.sigma, params)
    rows = []
    for dl in sorted(float(d) for d in detunings):
        s = PulseSpec(spec.sigma, dl, spec.mean_photons)
        inp = make_gaussian(s, grid)
        out = scatter_single(inp, params)
        ref = peak_position(inp)
        g1 = out.intensity()
        pd = phase_derivatives(dl, params)
        rows.append(DispersionRow(dl, peak_delay(out, ref), pd.d1, pd.d2, pd.d3, g1 / g1.max()))
    return DispersionScan(grid.points, rows)


def write_scan_csv(scan: DispersionScan, path) -> None:
    """Columns: detuning (GHz), peak delay (ps), d2 (ps^2), d3 (ps^3)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["delta_L_ghz", "delay_ps", "d2", "d3"])
        for r in scan.rows:
            wr.writerow([f"{angular_to_ghz(r.delta_l):.9g}", f"{r.delay * PS_PER_NS:.9g}",
                         f"{r.d2 * PS_PER_NS ** 2:.9g}", f"{r.d3 * PS_PER_NS ** 3:.9g}"])
