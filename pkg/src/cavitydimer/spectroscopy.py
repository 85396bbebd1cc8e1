"""CW reflection spectra of an emitter coupled to two polarized cavity modes.

Low-power input-output model with non-cavity emitter loss ``gamma``, the
classical one-sided cavity Wigner delay, a phenomenological saturation law
for the delay versus photon number, and Lorentzian line fitting.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .qed_core import PS_PER_NS, ParameterError, angular_to_ghz


class FitError(RuntimeError):
    """Line fit did not converge; ``trace`` holds the residual norms per step."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass(frozen=True)
class PolarizedCavityParams:
    """Two linearly polarized modes H and V sharing one decay rate.

    Detunings are mode minus emitter frequency, all in rad/ns.
    """

    delta_h: float
    delta_v: float
    g_h: float
    g_v: float
    kappa: float
    gamma: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if self.g_h < 0 or self.g_v < 0:
            raise ParameterError("couplings must be non-negative")
        if self.gamma < 0:
            raise ParameterError("gamma must be non-negative")

    @property
    def Gamma_h(self) -> float:
        return 4.0 * self.g_h ** 2 / self.kappa

    @property
    def Gamma_v(self) -> float:
        return 4.0 * self.g_v ** 2 / self.kappa

    @classmethod
    def from_rates(cls, Gamma_h, Gamma_v, kappa, delta_h=0.0, delta_v=0.0, gamma=0.0):
        return cls(delta_h, delta_v, math.sqrt(Gamma_h * kappa / 4.0),
                   math.sqrt(Gamma_v * kappa / 4.0), kappa, gamma)


@dataclass(frozen=True)
class PolarizationState:
    """Input Jones vector ``alpha`` and output projection ``epsilon`` in the (H, V) basis."""

    alpha_h: complex
    alpha_v: complex
    epsilon_h: complex
    epsilon_v: complex

    def __post_init__(self):
        for name, a, b in (("alpha", self.alpha_h, self.alpha_v), ("epsilon", self.epsilon_h, self.epsilon_v)):
            if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > 1e-12:
                raise ParameterError(f"{name} must be a unit Jones vector")


CROSS_POLARIZED = PolarizationState(1 / math.sqrt(2), 1 / math.sqrt(2), 1 / math.sqrt(2), -1 / math.sqrt(2))
CO_POLARIZED_H = PolarizationState(1.0, 0.0, 1.0, 0.0)

PRESETS = {"transmission": CROSS_POLARIZED, "back-reflection": CO_POLARIZED_H}


def mode_transmission(delta_mode, delta_L, kappa):
    """Empty-cavity response ``1 / (1 + 2i (delta_mode - delta_L) / kappa)``."""
    return 1.0 / (1.0 + 2j * (delta_mode - np.asarray(delta_L)) / kappa)


def reflection_amplitude(delta_L, pol: PolarizationState, cav: PolarizedCavityParams):
    """Reflected over input field for laser detuning ``delta_L`` (laser minus emitter)."""
    dL = np.asarray(delta_L, dtype=float)
    tH = mode_transmission(cav.delta_h, dL, cav.kappa)
    tV = mode_transmission(cav.delta_v, dL, cav.kappa)
    GH, GV = cav.Gamma_h, cav.Gamma_v
    rHH = 1.0 - 2.0 * tH
    rVV = 1.0 - 2.0 * tV
    cross = 0.0
    if GH > 0 or GV > 0:
        # without coupling the emitter drops out (its denominator can vanish at resonance)
        den = tH * GH + tV * GV - 2j * dL + cav.gamma
        cross = 2.0 * tH * math.sqrt(GH) * tV * math.sqrt(GV) / den
        rHH = rHH + 2.0 * tH * tH * GH / den
        rVV = rVV + 2.0 * tV * tV * GV / den
    r = (pol.epsilon_h * (pol.alpha_h * rHH + pol.alpha_v * cross)
         + pol.epsilon_v * (pol.alpha_h * cross + pol.alpha_v * rVV))
    return r if np.ndim(r) else complex(r)


def emitter_amplitude(delta_L, pol: PolarizationState, cav: PolarizedCavityParams):
    """Low-power emitter coherence per unit input amplitude."""
    dL = np.asarray(delta_L, dtype=float)
    tH = mode_transmission(cav.delta_h, dL, cav.kappa)
    tV = mode_transmission(cav.delta_v, dL, cav.kappa)
    num = 1j * (tH * math.sqrt(cav.Gamma_h) * pol.alpha_h + tV * math.sqrt(cav.Gamma_v) * pol.alpha_v)
    return num / (0.5 * tH * cav.Gamma_h + 0.5 * tV * cav.Gamma_v - 1j * dL + 0.5 * cav.gamma)


def reflection_map(delta_L, delta_c, pol: PolarizationState, cav: PolarizedCavityParams,
                   mode_splitting: float = 0.0) -> np.ndarray:
    """``|r|^2`` over laser detuning (columns) and H-mode detuning (rows).

    The V mode follows the H mode at ``delta_h + mode_splitting``.
    """
    out = np.empty((len(delta_c), len(delta_L)))
    for i, dc in enumerate(delta_c):
        c = PolarizedCavityParams(dc, dc + mode_splitting, cav.g_h, cav.g_v, cav.kappa, cav.gamma)
        out[i] = np.abs(reflection_amplitude(delta_L, pol, c)) ** 2
    return out


def cavity_wigner_delay(omega_L, omega_C, kappa):
    """Group delay of a one-sided cavity in ns: ``(4/kappa) / (1 + 4 ((wL - wC)/kappa)^2)``."""
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    x = (np.asarray(omega_L) - omega_C) / kappa
    return (4.0 / kappa) / (1.0 + 4.0 * x * x)


def saturation_delay(n_bar, n_crit, d_tau_0, d_tau_inf):
    """Phenomenological delay ratio ``dtau(n)/dtau(0)`` for a saturating emitter."""
    if not n_crit > 0:
        raise ParameterError("n_crit must be positive")
    n = np.asarray(n_bar, dtype=float)
    if np.any(n < 0):
        raise ParameterError("n_bar must be non-negative")
    x = n / n_crit
    return 1.0 - (1.0 - d_tau_inf / d_tau_0) * x / (1.0 + x)


# --- line fitting --------------------------------------------------------

def lorentzian(x, amp, center, fwhm, offset=0.0):
    hw = 0.5 * fwhm
    return amp * hw * hw / ((x - center) ** 2 + hw * hw) + offset


@dataclass(frozen=True)
class LorentzFit:
    center: float
    fwhm: float
    amp: float
    offset: float
    residual: float

    def to_json(self) -> dict:
        return {"center": self.center, "fwhm": self.fwhm, "amp": self.amp,
                "offset": self.offset, "residual": self.residual}


def _seed_single(x, y):
    base = float(np.min(y))
    i = int(np.argmax(y))
    amp = float(y[i] - base)
    above = x[y - base >= 0.5 * amp]
    fwhm = float(above.max() - above.min()) if len(above) > 1 else float(np.ptp(x)) / 10
    return [amp, float(x[i]), max(fwhm, 1e-12 * max(abs(x).max(), 1.0)), base]


def _lorentz_columns(x, amp, center, fwhm):
    """Partial derivatives of :func:`lorentzian` in (amp, center, fwhm)."""
    hw = 0.5 * fwhm
    u = x - center
    D = u * u + hw * hw
    return [hw * hw / D, 2.0 * amp * hw * hw * u / (D * D), amp * hw * u * u / (D * D)]


def _single_jac(x, amp, center, fwhm, offset):
    return np.column_stack(_lorentz_columns(x, amp, center, fwhm) + [np.ones_like(x)])


def _double_jac(x, a1, c1, w1, a2, c2, w2, offset):
    return np.column_stack(_lorentz_columns(x, a1, c1, w1) + _lorentz_columns(x, a2, c2, w2)
                           + [np.ones_like(x)])


def _run(fun, jac, p0, x, y):
    trace = []

    def res(p):
        r = fun(x, *p) - y
        trace.append(float(np.linalg.norm(r)))
        return r

    try:
        sol = least_squares(res, p0, jac=lambda p: jac(x, *p), method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(str(exc), trace) from exc
    if not sol.success:
        raise FitError(sol.message, trace)
    rel = float(np.linalg.norm(sol.fun) / max(np.linalg.norm(y), 1e-300))
    return sol.x, rel


def fit_lorentzian(x, y) -> LorentzFit:
    """Least-squares Lorentzian plus constant; ``residual`` is the relative L2 misfit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 8:
        raise FitError("need at least 8 samples")
    p, rel = _run(lorentzian, _single_jac, _seed_single(x, y), x, y)
    return LorentzFit(p[1], abs(p[2]), p[0], p[3], rel)


def double_lorentzian(x, a1, c1, w1, a2, c2, w2, offset=0.0):
    return lorentzian(x, a1, c1, w1) + lorentzian(x, a2, c2, w2) + offset


@dataclass(frozen=True)
class DoubleLorentzFit:
    lines: tuple
    offset: float
    residual: float

    @property
    def splitting(self) -> float:
        return abs(self.lines[1].center - self.lines[0].center)


def fit_double_lorentzian(x, y) -> DoubleLorentzFit:
    """Two Lorentzians on a shared constant; seeded from the two largest peaks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 8:
        raise FitError("need at least 8 samples")
    a, c, w, base = _seed_single(x, y)
    # second seed: highest point well outside the first line
    far = np.abs(x - c) > w
    if not np.any(far):
        raise FitError("only one line visible")
    j = np.argmax(np.where(far, y, -np.inf))
    p0 = [a, c, min(w, abs(x[j] - c)), float(y[j] - base), float(x[j]), min(w, abs(x[j] - c)), base]
    p, rel = _run(double_lorentzian, _double_jac, p0, x, y)
    lines = sorted([LorentzFit(p[1], abs(p[2]), p[0], 0.0, rel), LorentzFit(p[4], abs(p[5]), p[3], 0.0, rel)],
                   key=lambda f: f.center)
    return DoubleLorentzFit(tuple(lines), p[6], rel)


# --- dumps ---------------------------------------------------------------

def write_spectrum_csv(delta_L, intensity, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["detuning_ghz", "intensity"])
        for d, v in zip(np.atleast_1d(angular_to_ghz(np.asarray(delta_L))), intensity):
            wr.writerow([f"{d:.9g}", f"{v:.12e}"])


def write_fit_json(fit, path) -> None:
    if isinstance(fit, DoubleLorentzFit):
        doc = {"lines": [ln.to_json() for ln in fit.lines], "offset": fit.offset,
               "residual": fit.residual, "splitting": fit.splitting}
    else:
        doc = fit.to_json()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def delay_ps(delay_ns):
    return np.asarray(delay_ns) * PS_PER_NS
