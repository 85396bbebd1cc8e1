"""Emitter-cavity parameters, unit conversion and derived rates.

Internal units: time in ns, angular frequency in rad/ns, group velocity 1
(so positions are measured in ns as well).  Public I/O uses ordinary
frequencies in GHz and times in ps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path

TWO_PI = 2.0 * math.pi
PS_PER_NS = 1e3

PARAM_KEYS = ("g_ghz", "kappa_ghz", "gamma_ghz", "delta_c_ghz")


class ParameterError(ValueError):
    """Raised for parameters outside their physical domain."""


def ghz_to_angular(nu):
    return TWO_PI * nu


def angular_to_ghz(omega):
    return omega / TWO_PI


@dataclass(frozen=True)
class SystemParams:
    """Emitter-cavity constants in rad/ns.

    ``g = 0`` is accepted so the bare cavity can be modelled with the same
    code; quantities that need a finite Purcell rate check for it.
    """

    g: float
    kappa: float
    gamma: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "delta_c"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite number, got {v!r}")
        if self.g < 0:
            raise ParameterError(f"g must be non-negative, got {self.g}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")

    @property
    def Gamma(self) -> float:
        """Purcell-enhanced emitter decay rate 4 g^2 / kappa."""
        return 4.0 * self.g * self.g / self.kappa

    def require_emitter(self):
        if self.g <= 0:
            raise ParameterError("operation needs a coupled emitter (g > 0)")

    def replace(self, **changes) -> "SystemParams":
        d = asdict(self)
        d.update(changes)
        return SystemParams(**d)

    def to_ghz_dict(self) -> dict:
        return {
            "g_ghz": angular_to_ghz(self.g),
            "kappa_ghz": angular_to_ghz(self.kappa),
            "gamma_ghz": angular_to_ghz(self.gamma),
            "delta_c_ghz": angular_to_ghz(self.delta_c),
        }


@dataclass(frozen=True)
class DerivedRates:
    Gamma: float
    F_P: float
    beta: float
    n_crit: float
    tau_qd: float


def derive_rates(params: SystemParams) -> DerivedRates:
    """Purcell rate, Purcell factor, beta factor and critical photon number.

    With ``gamma == 0`` the Purcell factor is ``inf`` and beta is exactly 1.
    """
    params.require_emitter()
    Gamma = params.Gamma
    if params.gamma == 0:
        F_P = math.inf
        beta = 1.0
    else:
        F_P = Gamma / params.gamma
        beta = F_P / (F_P + 1.0)
    return DerivedRates(Gamma=Gamma, F_P=F_P, beta=beta,
                        n_crit=1.0 / (8.0 * beta), tau_qd=1.0 / Gamma)


def params_from_frequencies(nu_g, nu_kappa, nu_gamma=0.0, nu_delta_c=0.0) -> SystemParams:
    """Build :class:`SystemParams` from ordinary frequencies in GHz."""
    vals = [nu_g, nu_kappa, nu_gamma, nu_delta_c]
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
        raise ParameterError(f"frequencies must be finite numbers, got {vals}")
    if nu_g < 0:
        raise ParameterError(f"g must be non-negative, got {nu_g} GHz")
    if nu_kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {nu_kappa} GHz")
    return SystemParams(g=ghz_to_angular(float(nu_g)), kappa=ghz_to_angular(float(nu_kappa)),
                        gamma=ghz_to_angular(float(nu_gamma)),
                        delta_c=ghz_to_angular(float(nu_delta_c)))


def params_from_dict(d) -> SystemParams:
    """Validate a parameter mapping with the ``*_ghz`` keys."""
    if not isinstance(d, dict):
        raise ParameterError("parameter file must contain a JSON object")
    missing = [k for k in ("g_ghz", "kappa_ghz") if k not in d]
    if missing:
        raise ParameterError(f"missing keys: {', '.join(missing)}")
    unknown = sorted(set(d) - set(PARAM_KEYS))
    if unknown:
        raise ParameterError(f"unknown keys: {', '.join(unknown)}")
    for k, v in d.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParameterError(f"{k} must be a number, got {v!r}")
    return params_from_frequencies(d["g_ghz"], d["kappa_ghz"],
                                   d.get("gamma_ghz", 0.0), d.get("delta_c_ghz", 0.0))


def load_params(path) -> SystemParams:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_dict(d)


def default_config_path() -> Path:
    return Path(str(resources.files("cavitydimer") / "data" / "device.json"))


def device_params() -> SystemParams:
    """Default device parameters (g/2pi = 4.62 GHz, kappa/2pi = 20.1 GHz, lossless)."""
    return load_params(default_config_path())


def scaled_params(kappa_over_Gamma: float, Gamma_ghz: float = 4.24, delta_c_ghz: float = 0.0) -> SystemParams:
    """Parameters with a fixed Purcell rate and a chosen kappa/Gamma ratio."""
    Gamma = ghz_to_angular(Gamma_ghz)
    kappa = kappa_over_Gamma * Gamma
    return SystemParams(g=math.sqrt(Gamma * kappa / 4.0), kappa=kappa,
                        delta_c=ghz_to_angular(delta_c_ghz))
