"""Two-photon scattering: exact output wavefunction and G2 maps.

The output is the sum of the product of single-photon outputs and a
correlated term.  In frequency space the correlated term is

    C s_a(k1) s_a(k2) F(E),   E = k1 + k2,  C = i sqrt(kappa) g / (2 pi),
    F(E) = int dq f(E/2+q) f(E/2-q) K(E, q) / ((E - lambda_+)(E - lambda_-)),

where ``K = 2g (s_c(p1)+s_c(p2)) + (E - 2 delta_c + i kappa)(s_a(p1)+s_a(p2))``.
On a time lattice the same term is evaluated without any truncation of its
slowly decaying frequency tails by propagating a two-component amplitude
with the one-excitation effective Hamiltonian over the relative time.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .onephoton import check_window, scatter_single, t1
from .pulsegrid import (Grid1D, PulseSpec, SampledWaveform, make_gaussian, peak_delay,
                        peak_position, pulse_grid, spectrum_at)
from .qed_core import PS_PER_NS, SystemParams


class ResolutionError(RuntimeError):
    """Raised when a frequency grid does not resolve the correlated term."""


def s_amplitudes(k, params: SystemParams):
    """Atom and cavity excitation amplitudes ``(s_a, s_c)`` for a photon at ``k``."""
    k = np.asarray(k)
    den = (k - params.delta_c + 0.5j * params.kappa) * k - params.g ** 2
    sk = math.sqrt(params.kappa)
    return sk * params.g / den, sk * k / den


def heff1(params: SystemParams) -> np.ndarray:
    """One-excitation non-Hermitian Hamiltonian in the (cavity, atom) basis."""
    return np.array([[params.delta_c - 0.5j * params.kappa, params.g], [params.g, 0.0]], dtype=complex)


def heff2(params: SystemParams) -> np.ndarray:
    """Two-excitation Hamiltonian in the (two cavity photons, cavity photon + atom) basis."""
    r2g = math.sqrt(2.0) * params.g
    return np.array([[2.0 * params.delta_c - 1j * params.kappa, r2g],
                     [r2g, params.delta_c - 0.5j * params.kappa]], dtype=complex)


@dataclass(frozen=True)
class TwoPhotonKernel:
    params: SystemParams
    lambda_plus: complex
    lambda_minus: complex


def kernel(params: SystemParams) -> TwoPhotonKernel:
    """Poles of the correlated term (eigenvalues of :func:`heff2`)."""
    dc, kap, g = params.delta_c, params.kappa, params.g
    mid = (3.0 * dc - 1.5j * kap) / 2.0
    root = np.sqrt(((dc - 0.5j * kap) / 2.0) ** 2 + 2.0 * g * g + 0j)
    return TwoPhotonKernel(params, complex(mid + root), complex(mid - root))


@dataclass(frozen=True, eq=False)
class TwoPhotonWavefunction:
    """Symmetric two-photon amplitude ``psi[i, j] = psi(t_i, t_j)``."""

    grid: Grid1D
    psi: np.ndarray

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.spacing ** 2)

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.psi - self.psi.T)) / np.max(np.abs(self.psi)))

    def diagonal(self) -> SampledWaveform:
        return SampledWaveform(self.grid, np.diag(self.psi).copy())

    def __add__(self, other):
        return TwoPhotonWavefunction(self.grid, self.psi + other.psi)

    def __sub__(self, other):
        return TwoPhotonWavefunction(self.grid, self.psi - other.psi)


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform total-frequency grid ``E`` and relative grid ``q`` with ``dq = dE/2``.

    With this pairing ``E/2 +- q`` fall on one uniform grid of step ``dE/2``,
    so the pulse spectrum is evaluated only once.
    """

    E: np.ndarray
    q: np.ndarray

    @property
    def dE(self):
        return self.E[1] - self.E[0]

    @property
    def dq(self):
        return self.q[1] - self.q[0]


def spectral_grid(spec_center: float, width: float, n_E: int = 401) -> SpectralGrid:
    """``E`` in ``2*center +- width`` (``n_E`` points), ``q`` in ``+- width`` (``2 n_E - 1`` points)."""
    E = 2.0 * spec_center + np.linspace(-width, width, n_E)
    q = np.linspace(-width, width, 2 * n_E - 1)
    return SpectralGrid(E, q)


def default_spectral_grid(sigma: float, k0: float = 0.0, n_E: int = 401) -> SpectralGrid:
    return spectral_grid(k0, 10.0 / sigma, n_E)


def _pair_spectrum(fspec, sg: SpectralGrid):
    """f(E/2+q) f(E/2-q) on the (E, q) grid, plus the momenta."""
    p1 = sg.E[:, None] / 2.0 + sg.q[None, :]
    p2 = sg.E[:, None] / 2.0 - sg.q[None, :]
    step = sg.dE / 2.0
    lo = min(p1.min(), p2.min())
    n = int(round((max(p1.max(), p2.max()) - lo) / step)) + 1
    pgrid = lo + step * np.arange(n)
    fp = fspec(pgrid)
    i1 = np.rint((p1 - lo) / step).astype(int)
    i2 = np.rint((p2 - lo) / step).astype(int)
    return fp[i1] * fp[i2], p1, p2


def _spectrum_function(pulse):
    if isinstance(pulse, PulseSpec):
        return pulse.spectrum
    if isinstance(pulse, SampledWaveform):
        return lambda k: spectrum_at(pulse, k)
    return pulse


def correlated_amplitude_F(pulse, params: SystemParams, sg: SpectralGrid) -> np.ndarray:
    """``F(E)`` on ``sg.E`` (trapezoid over ``q``)."""
    ff, p1, p2 = _pair_spectrum(_spectrum_function(pulse), sg)
    sa1, sc1 = s_amplitudes(p1, params)
    sa2, sc2 = s_amplitudes(p2, params)
    E = sg.E[:, None]
    K = 2.0 * params.g * (sc1 + sc2) + (E - 2.0 * params.delta_c + 1j * params.kappa) * (sa1 + sa2)
    ker = kernel(params)
    integ = integrate.trapezoid(ff * K, dx=sg.dq, axis=1)
    return integ / ((sg.E - ker.lambda_plus) * (sg.E - ker.lambda_minus))


def correlation_prefactor(params: SystemParams) -> complex:
    return 1j * math.sqrt(params.kappa) * params.g / (2.0 * math.pi)


def spectral_output(pulse, params: SystemParams, k1, k2, sg: SpectralGrid | None = None):
    """Output amplitude ``psi_out(k1, k2)`` at arbitrary frequency pairs."""
    fs = _spectrum_function(pulse)
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    E = k1 + k2
    if sg is None:
        raise ValueError("a SpectralGrid is needed to evaluate F(E)")
    Fg = correlated_amplitude_F(pulse, params, sg)
    F = np.interp(E, sg.E, Fg.real) + 1j * np.interp(E, sg.E, Fg.imag)
    sa1, _ = s_amplitudes(k1, params)
    sa2, _ = s_amplitudes(k2, params)
    return t1(k1, params) * t1(k2, params) * fs(k1) * fs(k2) + correlation_prefactor(params) * sa1 * sa2 * F


def spectral_norm(pulse, params: SystemParams, sg: SpectralGrid | None = None,
                  epsabs: float = 1e-14) -> float:
    """``||psi_out||^2`` by quadrature in (E, q): trapezoid in E, adaptive in q.

    The q integral runs over the whole line so the slow ``1/q^4`` tails of
    the correlated term are included.
    """
    fs = _spectrum_function(pulse)
    if sg is None:
        raise ValueError("a SpectralGrid is needed")
    F = correlated_amplitude_F(pulse, params, sg)
    C = correlation_prefactor(params)
    dens = np.empty(len(sg.E))
    for i, (E, FE) in enumerate(zip(sg.E, F)):
        def ig(q, E=E, FE=FE):
            k1, k2 = E / 2 + q, E / 2 - q
            sa1, _ = s_amplitudes(k1, params)
            sa2, _ = s_amplitudes(k2, params)
            v = t1(k1, params) * t1(k2, params) * fs(k1) * fs(k2) + C * sa1 * sa2 * FE
            return abs(v) ** 2
        dens[i] = integrate.quad(ig, -np.inf, np.inf, limit=400, epsabs=epsabs)[0]
    return float(integrate.trapezoid(dens, sg.E))


def _z_vectors(pulse, params: SystemParams, sg: SpectralGrid) -> np.ndarray:
    """Two-component source amplitude Z(E) that seeds the correlated term in time."""
    ff, p1, p2 = _pair_spectrum(_spectrum_function(pulse), sg)
    sa1, sc1 = s_amplitudes(p1, params)
    sa2, sc2 = s_amplitudes(p2, params)
    r2 = math.sqrt(2.0)
    u0 = 2.0 * sc1 * sc2
    u1 = sa1 * sc2 + sa2 * sc1
    v0 = r2 * (sc1 + sc2)
    v1 = sa1 + sa2
    H2 = heff2(params)
    # G2(E) v for every (E, q), via the explicit 2x2 inverse
    E = sg.E[:, None]
    a, b, c, d = E - H2[0, 0], -H2[0, 1], -H2[1, 0], E - H2[1, 1]
    det = a * d - b * c
    sk = math.sqrt(params.kappa)
    gam0 = r2 * sk * (d * v0 - b * v1) / det
    gam1 = r2 * sk * (-c * v0 + a * v1) / det
    z0 = r2 * u0 - r2 * gam0
    z1 = r2 * u1 - gam1
    Z = np.empty((len(sg.E), 2), dtype=complex)
    Z[:, 0] = integrate.trapezoid(ff * z0, dx=sg.dq, axis=1)
    Z[:, 1] = integrate.trapezoid(ff * z1, dx=sg.dq, axis=1)
    return Z / (4.0 * math.pi)


def correlated_term(pulse, params: SystemParams, grid: Grid1D, sg: SpectralGrid) -> np.ndarray:
    """Correlated part of the output on the ``grid`` x ``grid`` time lattice."""
    n = grid.n_points
    t = grid.points
    if params.g == 0:
        return np.zeros((n, n), dtype=complex)
    mu, V = np.linalg.eig(heff1(params))
    Z = _z_vectors(pulse, params, sg)
    c = np.linalg.solve(V, Z.T)                      # (2, n_E)
    phase = np.exp(-1j * np.outer(t, sg.E))          # (n, n_E)
    G = (phase @ (c.T * sg.dE)) * (params.kappa / math.sqrt(2.0)) * V[0, :]   # (n, 2)
    # trapezoid end weights
    G -= 0.5 * sg.dE * (params.kappa / math.sqrt(2.0)) * V[0, :] * (
        phase[:, [0]] * c[:, 0] + phase[:, [-1]] * c[:, -1])
    idx = np.arange(n)
    imin = np.minimum(idx[:, None], idx[None, :])
    tau = np.abs(idx[:, None] - idx[None, :]) * grid.spacing
    out = np.zeros((n, n), dtype=complex)
    for a in range(2):
        out += G[imin, a] * np.exp(-1j * mu[a] * tau)
    return out


@dataclass(frozen=True)
class TwoPhotonOutput:
    psi: TwoPhotonWavefunction
    linear: TwoPhotonWavefunction
    correlated: TwoPhotonWavefunction
    single: SampledWaveform


def scatter_two(pulse, params: SystemParams, grid: Grid1D | None = None,
                sg: SpectralGrid | None = None, check_resolution: bool = False) -> TwoPhotonOutput:
    """Scatter the product state ``f (x) f``.

    ``pulse`` is a :class:`PulseSpec` (analytic spectrum) or a time-domain
    :class:`SampledWaveform`.  The output lives on ``grid`` (default: 512
    points over the pulse window).  With ``check_resolution`` the
    correlated-term norm is recomputed on a twice finer E grid and a
    relative change above 1% raises :class:`ResolutionError`.
    """
    if isinstance(pulse, PulseSpec):
        spec = pulse
        if grid is None:
            grid = pulse_grid(spec.sigma, params, n_points=512)
        f = make_gaussian(spec, grid)
    else:
        f = pulse
        grid = f.grid
        spec = None
    if sg is None:
        if spec is None:
            raise ValueError("pass a SpectralGrid when scattering a sampled waveform")
        sg = default_spectral_grid(spec.sigma, spec.k0)
    src = spec if spec is not None else f
    single = scatter_single(f, params)
    lin = np.outer(single.amps, single.amps)
    corr = correlated_term(src, params, grid, sg)
    if check_resolution and params.g > 0:
        fine = spectral_grid(0.5 * (sg.E[0] + sg.E[-1]) / 2.0, 0.5 * (sg.E[-1] - sg.E[0]), 2 * len(sg.E) - 1)
        corr_f = correlated_term(src, params, grid, fine)
        n0 = np.linalg.norm(corr)
        if n0 > 0 and abs(np.linalg.norm(corr_f) - n0) / n0 > 0.01:
            raise ResolutionError("correlated term changes by more than 1% on E-grid refinement")
    total = lin + corr
    diag = SampledWaveform(grid, np.diag(total).copy())
    check_window(diag, "two-photon output diagonal")
    return TwoPhotonOutput(TwoPhotonWavefunction(grid, total), TwoPhotonWavefunction(grid, lin),
                           TwoPhotonWavefunction(grid, corr), single)


def input_product(pulse: SampledWaveform) -> TwoPhotonWavefunction:
    return TwoPhotonWavefunction(pulse.grid, np.outer(pulse.amps, pulse.amps))


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """Binned coincidence counts over detection times (ns), with normalization tag."""

    edges: np.ndarray
    counts: np.ndarray
    normalization: str = "raw"

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def g2_map(psi: TwoPhotonWavefunction, n_bar: float, normalize: bool = True) -> CorrelationMap:
    """G2 on the lattice: ``n_bar^2 |psi|^2``, unit-peak normalized by default."""
    counts = n_bar ** 2 * np.abs(psi.psi) ** 2
    g = psi.grid
    edges = g.origin - 0.5 * g.spacing + g.spacing * np.arange(g.n_points + 1)
    if normalize:
        return CorrelationMap(edges, counts / counts.max(), "unit-peak")
    return CorrelationMap(edges, counts, "raw")


def diagonal_delay(psi: TwoPhotonWavefunction, reference: float = 0.0) -> float:
    return peak_delay(psi.diagonal(), reference)


def write_map(psi: TwoPhotonWavefunction, stem, extra: dict | None = None) -> None:
    """``<stem>.bin`` (row-major float64 |psi|^2) plus ``<stem>.json`` grid metadata."""
    data = np.ascontiguousarray(np.abs(psi.psi) ** 2, dtype="<f8")
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(data.tobytes(order="C"))
    meta = {
        "shape": list(data.shape),
        "dtype": "float64",
        "byte_order": "little",
        "order": "row-major",
        "quantity": "abs2",
        "axis0": "t1", "axis1": "t2",
        "origin_ps": psi.grid.origin * PS_PER_NS,
        "spacing_ps": psi.grid.spacing * PS_PER_NS,
        "n_points": psi.grid.n_points,
    }
    if extra:
        meta.update(extra)
    with open(f"{stem}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_map(stem):
    with open(f"{stem}.json") as fh:
        meta = json.load(fh)
    data = np.fromfile(f"{stem}.bin", dtype="<f8").reshape(meta["shape"])
    return data, meta


def write_diagonal_csv(psi: TwoPhotonWavefunction, path, n_bar: float = 1.0) -> None:
    d = np.abs(np.diag(psi.psi)) ** 2
    d = d / d.max()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t_ps", "g2_diag"])
        for t, v in zip(psi.grid.points, d):
            wr.writerow([f"{t * PS_PER_NS:.6f}", f"{v:.12e}"])
