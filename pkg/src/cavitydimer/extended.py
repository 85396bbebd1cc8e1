"""Extended (scattering-continuum) two-photon eigenstates.

For real relative momentum ``d1 > 0`` the relative profile on ``x > 0`` is

    f(x) = A e^{i d1 x} + B e^{-i d1 x} + C e^{i d2 x} + D e^{-i d2 x},

extended symmetrically to ``x < 0``.  When the partner momentum ``d2`` is
imaginary the growing term is dropped (``D = 0``).  When it is real the
eigenvalue is shared by the labels ``d1`` and ``d2``; the two states of the
pair are fixed by requiring them to be orthogonal.  These states are only
used as a completeness diagnostic for the two-photon output.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import boundstate as bs
from .onephoton import t1
from .pulsegrid import PulseSpec, make_gaussian, pulse_grid
from .qed_core import SystemParams
from .twophoton import TwoPhotonWavefunction, scatter_two


class BranchBoundaryError(ValueError):
    """``d1`` sits where ``d2`` changes between real and imaginary."""


@dataclass(frozen=True)
class ExtendedCoeffs:
    E: float
    delta1: float
    delta2: complex
    A: complex
    B: complex
    C: complex
    D: complex
    kind: str          # "imaginary" or "real" partner momentum
    lam: complex
    N: float

    @property
    def ratios(self) -> dict:
        return {"B_over_A": self.B / self.A, "C_over_A": self.C / self.A, "D_over_A": self.D / self.A}

    def vector(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D])


def partner(delta1: float, E, params: SystemParams):
    """``(d2, kind)``; a real ``d2`` is returned positive."""
    G = params.Gamma
    try:
        d2 = bs.delta2_of(complex(delta1), E, params)
    except bs.SingularityError as exc:
        raise BranchBoundaryError(str(exc)) from exc
    # d2 is a square root, so rounding in its argument surfaces at sqrt(eps) scale
    if abs(d2) < 1e-6 * G or not np.isfinite(d2):
        raise BranchBoundaryError(f"partner momentum vanishes at d1={delta1:.6g}")
    if abs(d2.imag) < bs.IM_TOL * G:
        return complex(abs(d2.real)), "real"
    return complex(1j * abs(d2.imag)), "imaginary"


def bc_matrix(delta1, delta2, E, params: SystemParams) -> np.ndarray:
    """The two boundary conditions as rows acting on ``(A, B, C, D)``."""
    d1, d2 = complex(delta1), complex(delta2)
    K1, K2, K3 = bs.k_coefficients(E, params)
    lam = bs.eigenvalue(E, d1, params)
    X = (lam + 1.0) * 1j * K1 + (lam - 1.0) * K3

    def col(m):
        return X + 2.0 * (1j * K2 + m) * complex(t1(0.5 * E + m, params))

    return np.array([[1j * d1, -1j * d1, 1j * d2, -1j * d2],
                     [col(d1), col(-d1), col(d2), col(-d2)]])


def _delta_norm(v, d1, d2, E, params, kind):
    # delta(E-E') delta(d1-d1') normalization; localized terms carry no delta weight
    w = abs(v[0]) ** 2 + abs(v[1]) ** 2
    if kind == "real":
        h = 1e-6 * params.Gamma
        dd2 = (partner(d1 + h, E, params)[0] - partner(d1 - h, E, params)[0]).real / (2 * h)
        w += (abs(v[2]) ** 2 + abs(v[3]) ** 2) / abs(dd2)
    return 1.0 / (2.0 * math.pi * math.sqrt(w))


def extended_coeffs(delta1: float, E, params: SystemParams) -> ExtendedCoeffs:
    """Coefficients of the extended eigenstate labelled by real ``delta1 > 0``.

    Raises:
        ValueError: ``delta1`` not positive.
        BranchBoundaryError: at the real/imaginary transition of ``d2``.
    """
    if not delta1 > 0:
        raise ValueError("delta1 must be real and positive")
    d1 = float(delta1)
    if params.g == 0:
        # no emitter: symmetrized plane waves, cos(d1 x)
        v = np.array([1.0, 1.0, 0.0, 0.0], dtype=complex)
        return ExtendedCoeffs(float(E), d1, 0j, *v, "free", complex(t1(0.5 * E + d1, params) * t1(0.5 * E - d1, params)),
                              1.0 / (2.0 * math.pi * math.sqrt(2.0)))
    d2, kind = partner(d1, E, params)
    M = bc_matrix(d1, d2, E, params)
    if kind == "imaginary":
        sol = np.linalg.solve(M[:, [1, 2]], -M[:, 0])
        v = np.array([1.0, sol[0], sol[1], 0.0], dtype=complex)
    else:
        v = _paired_vector(M)
    return ExtendedCoeffs(float(E), d1, d2, *v, kind, bs.eigenvalue(E, d1, params),
                          _delta_norm(v, d1, d2, E, params, kind))


def _paired_vector(M):
    """Member of the degenerate pair that is dominated by the ``d1`` waves.

    The pair conditions say the two states are orthogonal with respect to
    both the ``d1``-wave and the ``d2``-wave Gram forms on the null space, so
    they are the generalized eigenvectors of that pencil.
    """
    _, _, vh = np.linalg.svd(M)
    Nsp = vh[2:].conj().T                               # 4x2 null-space basis
    G1 = Nsp[:2].conj().T @ Nsp[:2]
    G2 = Nsp[2:].conj().T @ Nsp[2:]
    mu, X = eigh(G1, G2)
    v = Nsp @ X[:, np.argmax(mu)]
    return v / v[0] if abs(v[0]) > 0 else v


def pair_partner(c: ExtendedCoeffs, params: SystemParams) -> ExtendedCoeffs:
    """State labelled by ``d2`` that pairs with ``c`` (real partner momentum only)."""
    if c.kind != "real":
        raise ValueError("only real partner momenta have a degenerate partner")
    return extended_coeffs(c.delta2.real, c.E, params)


def extended_profile(c: ExtendedCoeffs, x) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=float))
    f = c.A * np.exp(1j * c.delta1 * ax) + c.B * np.exp(-1j * c.delta1 * ax)
    if c.kind != "free":
        f = f + c.C * np.exp(1j * c.delta2 * ax)
    if c.kind == "real":
        # D multiplies a growing exponential unless d2 is real
        f = f + c.D * np.exp(-1j * c.delta2 * ax)
    return c.N * f


@dataclass(frozen=True)
class DecompositionResult:
    l2_residual: float
    bound_norm: float
    extended_norm: float
    skipped: int


def _midpoints(a, b, n):
    h = (b - a) / n
    return a + h * (np.arange(n) + 0.5), h


def decomposition_check(pulse: PulseSpec, params: SystemParams, n_points: int = 128,
                        n_E: int = 161, n_delta: int = 160, delta_max: float | None = None,
                        n_E_bound: int = 161) -> DecompositionResult:
    """Compare ``S|in>`` with its reconstruction from bound plus extended eigenstates.

    Both pieces are evaluated on the same lattice; the extended part uses a
    midpoint rule in ``d1`` over ``(0, delta_max]`` (default ``6/sigma``).
    Labels where the coefficients cannot be built are skipped with a warning.
    """
    sigma = pulse.sigma
    grid = pulse_grid(sigma, params if params.g > 0 else None, n_points=n_points)
    f = make_gaussian(pulse, grid)
    psi_in = TwoPhotonWavefunction(grid, np.outer(f.amps, f.amps))
    target = scatter_two(pulse, params, grid=grid).psi.psi

    bound = np.zeros_like(target)
    if params.g > 0:
        try:
            E_b = bs.default_E_grid(sigma, params, pulse.k0, n_E_bound)
            bound = bs.bound_projection(psi_in, params, E_grid=E_b, scatter=True).bound_psi.psi
        except bs.BranchError:
            pass

    dmax = 6.0 / sigma if delta_max is None else delta_max
    D1, wD = _midpoints(0.0, dmax, n_delta)
    E, wE = _midpoints(2 * pulse.k0 - 10.0 / sigma, 2 * pulse.k0 + 10.0 / sigma, n_E)
    n = grid.n_points
    dt = grid.spacing
    s_idx, m_idx = bs._sm_layout(n)
    R = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    R[s_idx, m_idx] = psi_in.psi
    tau = (np.arange(2 * n - 1) - (n - 1)) * dt
    tc = grid.origin + 0.5 * dt * np.arange(2 * n - 1)
    out = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    skipped = 0
    for e in E:
        prof = np.zeros((n_delta, 2 * n - 1), dtype=complex)
        lam = np.zeros(n_delta, dtype=complex)
        for j, d in enumerate(D1):
            try:
                c = extended_coeffs(d, e, params)
            except (BranchBoundaryError, np.linalg.LinAlgError, ValueError):
                skipped += 1
                continue
            prof[j] = extended_profile(c, tau)
            lam[j] = c.lam
        ph = np.exp(1j * e * tc)
        ov = dt * dt * (ph @ (R @ prof.conj().T))        # <ext|in> for each d1
        out += np.outer(np.conj(ph), (lam * ov * wD) @ prof) * wE
    if skipped:
        warnings.warn(f"{skipped} extended labels skipped at branch boundaries", RuntimeWarning)
    ext = out[s_idx, m_idx]
    recon = bound + ext
    res = float(np.linalg.norm(target - recon) / np.linalg.norm(target))
    return DecompositionResult(res, float(np.sum(np.abs(bound) ** 2) * dt * dt),
                               float(np.sum(np.abs(ext) ** 2) * dt * dt), skipped)
