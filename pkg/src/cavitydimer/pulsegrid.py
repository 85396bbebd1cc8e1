"""Uniform complex waveforms, Gaussian pulses and their spectra.

Time-domain amplitudes are sampled on ``t_n = origin + n * spacing``.  The
spectrum uses the unitary convention

    a~(w) = (2 pi)^(-1/2) * integral a(t) exp(+i w t) dt

so a spectral phase ``phi(w)`` delays a pulse by ``+phi'(w)``.  Positions
along the waveguide are ``x = -t`` (group velocity 1).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .qed_core import PS_PER_NS, SystemParams

EDGE_TOL = 1e-6


class WindowError(RuntimeError):
    """Raised when a waveform is not contained in its grid window."""


class FitError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class Grid1D:
    n_points: int
    spacing: float
    origin: float = 0.0

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n_points)

    @property
    def length(self) -> float:
        return self.n_points * self.spacing

    def dual(self) -> "Grid1D":
        """Frequency grid matching this time grid (FFT-shifted ordering)."""
        dw = 2.0 * math.pi / self.length
        return Grid1D(self.n_points, dw, -dw * (self.n_points // 2))


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian input pulse: amplitude width ``sigma`` (ns), central detuning ``k0`` (rad/ns)."""

    sigma: float
    k0: float = 0.0
    mean_photons: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mean_photons < 0:
            raise ValueError("mean_photons must be non-negative")

    @property
    def intensity_fwhm(self) -> float:
        # |f|^2 ~ exp(-t^2/sigma^2)
        return 2.0 * math.sqrt(math.log(2.0)) * self.sigma

    def spectrum(self, k, center=0.0):
        """Analytic spectrum of :func:`gaussian_amplitude` (same transform convention)."""
        k = np.asarray(k, dtype=float)
        s = self.sigma
        return ((s / math.sqrt(math.pi)) ** 0.5
                * np.exp(-0.5 * (k - self.k0) ** 2 * s * s) * np.exp(1j * k * center))


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Complex samples on a uniform grid.

    ``domain`` is ``"time"`` or ``"frequency"``.  ``ref`` stores the origin of
    the conjugate grid so that transforms round-trip exactly.
    """

    grid: Grid1D
    amps: np.ndarray
    domain: str = "time"
    ref: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.shape != (self.grid.n_points,):
            raise ValueError(f"amps shape {a.shape} does not match grid size {self.grid.n_points}")
        object.__setattr__(self, "amps", a)

    @property
    def axis(self) -> np.ndarray:
        return self.grid.points

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2) * self.grid.spacing)

    def intensity(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def edge_ratio(self) -> float:
        """Largest boundary amplitude relative to the peak amplitude."""
        a = np.abs(self.amps)
        peak = a.max()
        if peak == 0:
            return 0.0
        return float(max(a[0], a[-1]) / peak)


def gaussian_amplitude(t, spec: PulseSpec, center=0.0):
    s = spec.sigma
    x = np.asarray(t, dtype=float) - center
    return (s * math.sqrt(math.pi)) ** -0.5 * np.exp(-1j * spec.k0 * x) * np.exp(-0.5 * x * x / (s * s))


def pulse_grid(sigma: float, params: SystemParams | None = None, n_points: int = 4096,
               lead: float = 8.0, tail_decades: float = 16.0) -> Grid1D:
    """Grid covering ``[-lead*sigma, lead*sigma + tail]`` for scattered outputs.

    The tail is ``tail_decades`` e-folds of the slowest decaying pole of the
    single-photon transmission, so that scattered exponential tails fall
    below ~1e-7 of the peak before reaching the edge.
    """
    from .onephoton import slowest_decay_rate

    tail = 0.0
    if params is not None:
        tail = tail_decades / slowest_decay_rate(params)
    t0 = -lead * sigma
    length = 2.0 * lead * sigma + tail
    return Grid1D(n_points, length / n_points, t0)


def make_gaussian(spec: PulseSpec, grid: Grid1D, center: float = 0.0) -> SampledWaveform:
    """Sampled Gaussian pulse, renormalized to unit discrete L2 norm."""
    a = gaussian_amplitude(grid.points, spec, center)
    w = SampledWaveform(grid, a)
    if w.edge_ratio() > EDGE_TOL:
        raise WindowError(f"pulse truncated: edge amplitude {w.edge_ratio():.2e} of peak")
    return SampledWaveform(grid, a / math.sqrt(w.norm2()))


def to_spectrum(w: SampledWaveform) -> SampledWaveform:
    if w.domain != "time":
        raise ValueError("to_spectrum expects a time-domain waveform")
    g = w.grid
    n = g.n_points
    fg = g.dual()
    omega = fg.points
    amps = np.fft.fftshift(np.fft.ifft(w.amps)) * n * g.spacing / math.sqrt(2.0 * math.pi)
    amps = amps * np.exp(1j * omega * g.origin)
    return SampledWaveform(fg, amps, "frequency", g.origin)


def to_time(w: SampledWaveform) -> SampledWaveform:
    if w.domain != "frequency":
        raise ValueError("to_time expects a frequency-domain waveform")
    fg = w.grid
    n = fg.n_points
    dt = 2.0 * math.pi / (n * fg.spacing)
    tg = Grid1D(n, dt, w.ref)
    a = w.amps * np.exp(-1j * fg.points * w.ref)
    amps = np.fft.fft(np.fft.ifftshift(a)) * fg.spacing / math.sqrt(2.0 * math.pi)
    return SampledWaveform(tg, amps, "time", 0.0)


def spectrum_at(w: SampledWaveform, k) -> np.ndarray:
    """Exact discrete-time transform of ``w`` at arbitrary frequencies ``k``."""
    k = np.asarray(k, dtype=float)
    t = w.grid.points
    out = np.empty(k.shape, dtype=complex)
    flat = k.ravel()
    res = out.reshape(-1)
    for i in range(0, flat.size, 512):
        kk = flat[i:i + 512]
        res[i:i + 512] = np.exp(1j * np.outer(kk, t)) @ w.amps
    return out * (w.grid.spacing / math.sqrt(2.0 * math.pi))


def _parabolic_peak(y: np.ndarray, x0: float, dx: float) -> float:
    i = int(np.argmax(y))
    if i == 0 or i == len(y) - 1:
        raise WindowError("intensity maximum sits on the grid boundary")
    ym, yc, yp = y[i - 1], y[i], y[i + 1]
    den = ym - 2.0 * yc + yp
    shift = 0.0 if den == 0 else 0.5 * (ym - yp) / den
    return x0 + (i + shift) * dx


def peak_position(w: SampledWaveform) -> float:
    return _parabolic_peak(w.intensity(), w.grid.origin, w.grid.spacing)


def peak_delay(w: SampledWaveform, reference_peak: float = 0.0) -> float:
    """Peak time of ``|amps|^2`` (3-point parabolic interpolation) minus ``reference_peak``."""
    return peak_position(w) - reference_peak


@dataclass(frozen=True)
class GaussianFit:
    sigma_fit: float
    center: float
    amplitude: float
    fit_residual: float


def gaussian_width(w: SampledWaveform, residual_limit: float | None = None) -> GaussianFit:
    """Least-squares fit of ``A exp(-(t-t0)^2/sigma^2)`` to the intensity.

    ``fit_residual`` is the L2 misfit relative to the L2 norm of the data.
    If ``residual_limit`` is given, a larger residual raises :class:`FitError`.
    """
    t = w.grid.points
    y = w.intensity()
    peak = y.max()
    if peak <= 0:
        raise FitError("empty waveform")
    yn = y / peak
    t0 = t[np.argmax(y)]
    half = t[yn >= 0.5]
    s0 = max((half[-1] - half[0]) / (2.0 * math.sqrt(math.log(2.0))), w.grid.spacing)

    def model(x, amp, c, s):
        return amp * np.exp(-((x - c) / s) ** 2)

    try:
        with warnings.catch_warnings():
            # exact Gaussians leave the covariance undefined; it is not used
            warnings.simplefilter("ignore", OptimizeWarning)
            p, _ = curve_fit(model, t, yn, p0=[1.0, t0, s0], maxfev=10000)
    except RuntimeError as exc:
        raise FitError(f"Gaussian fit did not converge: {exc}") from exc
    resid = float(np.linalg.norm(model(t, *p) - yn) / np.linalg.norm(yn))
    if residual_limit is not None and resid > residual_limit:
        raise FitError(f"non-Gaussian profile, residual {resid:.3e}", residual=resid)
    return GaussianFit(abs(p[2]), p[1], p[0] * peak, resid)


def write_waveform_csv(w: SampledWaveform, path) -> None:
    """CSV with columns t_ps, re, im, abs2."""
    if w.domain != "time":
        raise ValueError("only time-domain waveforms are written as t_ps tables")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t_ps", "re", "im", "abs2"])
        for t, a in zip(w.grid.points, w.amps):
            wr.writerow([f"{t * PS_PER_NS:.6f}", f"{a.real:.12e}", f"{a.imag:.12e}", f"{abs(a) ** 2:.12e}"])


def read_waveform_csv(path) -> SampledWaveform:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    t = data[:, 0] / PS_PER_NS
    dt = (t[-1] - t[0]) / (len(t) - 1)
    return SampledWaveform(Grid1D(len(t), dt, t[0]), data[:, 1] + 1j * data[:, 2])
