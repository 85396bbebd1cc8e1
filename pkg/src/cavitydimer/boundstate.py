"""Two-photon bound states (photonic dimers) of the emitter-cavity system.

A bound eigenstate with total frequency ``E`` has relative-coordinate shape

    b_E(x) = A exp(i d1 |x|) + C exp(i d2 |x|),   Im d1, Im d2 > 0,

with ``d1`` a root of the boundary-condition determinant and ``d2`` tied to
``d1`` through the eigenvalue relation.  The full state is
``exp(-i E t_c) N b_E(t1 - t2)`` in detection times, normalized so that
``<B_E|B_E'> = delta(E - E')``.  Its transmission coefficient is
``t_B(E) = t1(E/2 + d1) t1(E/2 - d1)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.special import erfcx

from .onephoton import t1
from .pulsegrid import Grid1D, PulseSpec, SampledWaveform, make_gaussian, pulse_grid
from .qed_core import PS_PER_NS, SystemParams, angular_to_ghz
from .twophoton import TwoPhotonWavefunction

RES_TOL = 1e-10
IM_TOL = 1e-9          # |Im d2| below this (in units of Gamma) counts as real
START_E = 0.05         # continuation seed, in units of Gamma
SINGULAR_E = 1e-3      # resonance offset used when delta_c == 0, units of Gamma


class SolverError(RuntimeError):
    """Root search failed; ``trajectory`` holds (d1, |res|) pairs visited."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory or []


class BranchError(SolverError):
    """A root was found but it is not a localized (bound) solution."""


class SingularityError(ValueError):
    pass


class ResolutionError(RuntimeError):
    pass


def dimer_coefficients(E, params: SystemParams):
    """Coefficients ``(a, b, c, d)`` of the relative-coordinate equation."""
    g, kap, dc = params.g, params.kappa, params.delta_c
    a = -1j * (E - dc + 0.5j * kap)
    b = 0.5 * E * (dc - 0.5 * E - 0.5j * kap) + g * g
    c = 2j * kap * (dc - 0.5 * E)
    d = 1j * kap * E * (E * (dc - 0.5 * E) / 2.0 + g * g)
    return a, b, c, d


def _reduced_cd(E, params: SystemParams):
    # c and d share the factor i*kappa, and also E when delta_c == 0
    g, dc = params.g, params.delta_c
    if dc == 0:
        return -1.0, g * g - 0.25 * E * E
    return 2.0 * dc - E, E * (E * (2.0 * dc - E) / 4.0 + g * g)


def delta2_of(delta1, E, params: SystemParams) -> complex:
    """Partner momentum ``d2`` for ``d1``, on the branch with ``Im d2 >= 0``."""
    a, b, _, _ = dimer_coefficients(E, params)
    c, d = _reduced_cd(E, params)
    num = b * b * c + (a * a - 2.0 * b) * d + d * delta1 * delta1
    den = c * delta1 * delta1 - d
    if den == 0 or num == 0:
        raise SingularityError("branch point of the partner-momentum relation")
    r = np.sqrt(complex(num / den))
    return r if r.imag >= 0 else -r


def eigenvalue(E, delta, params: SystemParams) -> complex:
    """Scattering eigenvalue as the product of two single-photon coefficients."""
    return complex(t1(0.5 * E + delta, params) * t1(0.5 * E - delta, params))


def eigenvalue_rational(E, delta, params: SystemParams) -> complex:
    """Same eigenvalue from the rational form in ``(a, b, c, d)``."""
    a, b, c, d = dimer_coefficients(E, params)
    D2 = delta * delta
    return complex(1.0 + (d - c * D2) / (a * a * D2 + (b - D2) ** 2))


def k_coefficients(E, params: SystemParams):
    g, kap, dc = params.g, params.kappa, params.delta_c
    p = 2.0 * (E - dc) * (0.5 * E - dc) / kap
    return -p + 0.5 * kap + 2.0 * g * g / kap, p + 0.5 * kap - 2.0 * g * g / kap, 1.5 * E - 2.0 * dc


def m_matrix(delta1, E, params: SystemParams, delta2=None) -> np.ndarray:
    """Boundary-condition matrix acting on ``(A, C)`` (rows: slope at 0, jump condition)."""
    d1 = complex(delta1)
    d2 = delta2_of(d1, E, params) if delta2 is None else delta2
    K1, K2, K3 = k_coefficients(E, params)
    lam = eigenvalue(E, d1, params)
    X = (lam + 1.0) * 1j * K1 + (lam - 1.0) * K3
    tp1 = complex(t1(0.5 * E + d1, params))
    tp2 = complex(t1(0.5 * E + d2, params))
    return np.array([[1j * d1, 1j * d2],
                     [X + 2.0 * (1j * K2 + d1) * tp1, X + 2.0 * (1j * K2 + d2) * tp2]])


def detM_residual(delta1, E, params: SystemParams) -> complex:
    """Determinant of the boundary-condition matrix, divided by Gamma^2."""
    d1 = complex(delta1)
    d2 = delta2_of(d1, E, params)
    K1, K2, K3 = k_coefficients(E, params)
    tp1 = complex(t1(0.5 * E + d1, params))
    tp2 = complex(t1(0.5 * E + d2, params))
    lam = eigenvalue(E, d1, params)
    r = (2.0 * K2 * (tp1 * d2 - tp2 * d1) + 2j * d1 * d2 * (tp2 - tp1)
         + 1j * K3 * (d1 - d2) * (lam - 1.0) - K1 * (d1 - d2) * (1.0 + lam))
    return r / params.Gamma ** 2


def normalization(A, C, d1, d2) -> float:
    """``N`` such that ``2 pi |N|^2 int |A e^{i d1|x|} + C e^{i d2|x|}|^2 dx = 1``."""
    br = (abs(A) ** 2 / d1.imag + abs(C) ** 2 / d2.imag
          + 4.0 * (A * np.conj(C) / (d1.imag + d2.imag - 1j * (d1.real - d2.real))).real)
    if not br > 0:
        raise BranchError(f"non-positive norm bracket {br}")
    return 1.0 / math.sqrt(2.0 * math.pi * br)


@dataclass(frozen=True)
class BoundStateSolution:
    E: float
    delta1: complex
    delta2: complex
    A: complex
    C: complex
    N: float
    lam: complex
    residual: float
    iterations: int = 0

    def to_json(self) -> dict:
        def cx(z):
            return [float(np.real(z)), float(np.imag(z))]
        return {"E_ghz": angular_to_ghz(self.E), "E": self.E, "delta1": cx(self.delta1),
                "delta2": cx(self.delta2), "A": cx(self.A), "C": cx(self.C), "N": float(self.N),
                "lambda": cx(self.lam), "residual": float(self.residual)}

    @classmethod
    def from_json(cls, d) -> "BoundStateSolution":
        def cx(p):
            return complex(p[0], p[1])
        return cls(d["E"], cx(d["delta1"]), cx(d["delta2"]), cx(d["A"]), cx(d["C"]), d["N"],
                   cx(d["lambda"]), d["residual"])


def effective_energy(E, params: SystemParams) -> float:
    """``E`` itself, except exactly at resonance with ``delta_c == 0``.

    There ``t1(k) t1(-k) == 1`` for every ``k`` and the bound root sits on a
    pole; the determinant is then conditioned like 1/E, so the point is
    replaced by ``E = +-1e-3 Gamma``.
    """
    eps = SINGULAR_E * params.Gamma
    if params.delta_c == 0 and abs(E) < eps:
        return eps if E >= 0 else -eps
    return float(E)


def perturbative_delta1(params: SystemParams) -> complex:
    G = params.Gamma
    return 0.5j * G * (1.0 + G / params.kappa)


def _deflated(d1, E, params):
    # divides out the spurious d1 == d2 root on which the determinant vanishes identically
    return detM_residual(d1, E, params) * params.Gamma / (d1 - delta2_of(d1, E, params))


def _abs_res(d1, E, params):
    try:
        return abs(_deflated(d1, E, params))
    except (SingularityError, ZeroDivisionError, FloatingPointError):
        return math.inf


def residual_floor(d1, E, params: SystemParams) -> float:
    """Rounding floor of :func:`detM_residual` near ``d1``: ``|dres/dd1| |d1|`` times 64 ulp."""
    h = 1e-7 * params.Gamma
    try:
        dF = (detM_residual(d1 + h, E, params) - detM_residual(d1 - h, E, params)) / (2 * h)
    except (SingularityError, ZeroDivisionError):
        return math.inf
    return 64.0 * np.finfo(float).eps * abs(dF) * abs(d1)


def _newton(d1, E, params, max_iter=40):
    G = params.Gamma
    h = 1e-7 * G
    best = d1
    best_r = _abs_res(d1, E, params)
    for _ in range(max_iter):
        if best_r == 0.0:
            break
        try:
            F = _deflated(best, E, params)
            dF = (_deflated(best + h, E, params) - _deflated(best - h, E, params)) / (2 * h)
        except (SingularityError, ZeroDivisionError):
            break
        if dF == 0 or not np.isfinite(dF):
            break
        step = F / dF
        # damped step: halve until the residual decreases
        for _ in range(30):
            cand = best - step
            r = _abs_res(cand, E, params)
            if r < best_r:
                break
            if abs(step) < 1e-16 * G:
                return best, best_r
            step *= 0.5
        else:
            break
        best, best_r = cand, r
    return best, best_r


def _nelder_mead(d1, E, params, max_iter=500):
    G = params.Gamma
    traj = []

    def f(x):
        r = _abs_res((x[0] + 1j * x[1]) * G, E, params)
        traj.append(r)
        return r * r if np.isfinite(r) else 1e300

    res = minimize(f, [d1.real / G, d1.imag / G], method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-30, "maxiter": max_iter})
    return (res.x[0] + 1j * res.x[1]) * G, int(res.nit), traj


def _finish(E, d1, r, it, params, traj=()) -> BoundStateSolution:
    G = params.Gamma
    if r < RES_TOL:
        r = abs(detM_residual(d1, E, params))
    if not r < max(RES_TOL, residual_floor(d1, E, params)):
        raise SolverError(f"no root at E={E:.6g}: |res|={r:.3e}", list(traj))
    d2 = delta2_of(d1, E, params)
    if d1.imag <= 0 or d2.imag <= IM_TOL * G:
        raise BranchError(f"root at E={E:.6g} is not localized (d1={d1:.4g}, d2={d2:.4g})", list(traj))
    if abs(d1 - d2) < 1e-6 * G:
        raise BranchError("degenerate root d1 == d2", list(traj))
    A = 1.0 + 0j
    C = -d1 / d2
    return BoundStateSolution(float(E), complex(d1), complex(d2), A, complex(C),
                              normalization(A, C, d1, d2), eigenvalue(E, d1, params), float(r), it)


def refine_root(E, params: SystemParams, guess: complex) -> BoundStateSolution:
    """Root near ``guess``: Nelder-Mead on ``|res|^2`` followed by a damped Newton polish."""
    params.require_emitter()
    E = effective_energy(E, params)
    d1, r = _newton(complex(guess), E, params)
    if r < RES_TOL:
        return _finish(E, d1, r, 0, params)
    d1, it, traj = _nelder_mead(complex(guess), E, params)
    d1, r = _newton(d1, E, params)
    return _finish(E, d1, r, it, params, [(None, x) for x in traj[-50:]])


def _continuation_path(E, params):
    G = params.Gamma
    E = effective_energy(E, params)
    s = 1.0 if E >= 0 else -1.0
    e0 = START_E * G
    if abs(E) <= e0:
        path = [s * e0]
        x = e0
        while x / 4.0 > abs(E):
            x /= 4.0
            path.append(s * x)
        path.append(E)
    else:
        n = int(math.ceil((abs(E) - e0) / (0.1 * G)))
        path = list(s * np.linspace(e0, abs(E), n + 1))
    return path


def solve_bound(E, params: SystemParams, guess: complex | None = None) -> BoundStateSolution:
    """Bound-state solution at total frequency ``E``.

    Without a ``guess`` the root is followed from the perturbative seed at
    ``E = +-0.05 Gamma`` to ``E``.  Raises :class:`SolverError` when no root
    is found and :class:`BranchError` when the bound branch does not extend
    to ``E``.
    """
    params.require_emitter()
    if guess is not None:
        return refine_root(E, params, guess)
    return _solve_cached(float(E), params)


@lru_cache(maxsize=4096)
def _solve_cached(E, params):
    g = perturbative_delta1(params)
    sol = None
    for e in _continuation_path(E, params):
        sol = refine_root(e, params, g if sol is None else sol.delta1)
    return sol


def find_roots(E, params: SystemParams, n_seeds: int = 8, box: float = 3.0) -> list:
    """All distinct bound roots reachable from a grid of seeds in the upper half plane.

    Useful where uniqueness is not guaranteed (small kappa/Gamma).
    """
    G = params.Gamma
    roots = []
    for re in np.linspace(-box, box, n_seeds):
        for im in np.linspace(0.1, box, n_seeds):
            try:
                s = refine_root(E, params, (re + 1j * im) * G)
            except (SolverError, SingularityError):
                continue
            if all(abs(s.delta1 - r.delta1) > 1e-6 * G for r in roots):
                roots.append(s)
    return sorted(roots, key=lambda s: (s.delta1.imag, s.delta1.real))


@lru_cache(maxsize=64)
def branch_window(params: SystemParams, step: float = 0.1, e_max: float = 40.0):
    """Range ``(E_lo, E_hi)`` of total frequency where the bound branch exists."""
    G = params.Gamma
    ends = []
    for s in (1.0, -1.0):
        sol = solve_bound(s * START_E * G, params)
        E_ok = sol.E
        E_bad = None
        E = abs(E_ok)
        while E < e_max * G:
            E_next = E + step * G
            try:
                sol = refine_root(s * E_next, params, sol.delta1)
                E = E_next
                E_ok = s * E
            except (SolverError, SingularityError):
                E_bad = s * E_next
                break
        if E_bad is None:
            ends.append(s * e_max * G)
            continue
        last = sol
        for _ in range(40):
            mid = 0.5 * (E_ok + E_bad)
            try:
                last = refine_root(mid, params, last.delta1)
                E_ok = mid
            except (SolverError, SingularityError):
                E_bad = mid
            if abs(E_bad - E_ok) < 1e-9 * G:
                break
        ends.append(E_ok)
    return (ends[1], ends[0])


def solve_branch(E_values, params: SystemParams) -> list:
    """Solutions along a sorted frequency list; ``None`` outside the bound branch."""
    E_values = np.asarray(E_values, dtype=float)
    lo, hi = branch_window(params)
    out = [None] * len(E_values)
    inside = np.nonzero((E_values >= lo) & (E_values <= hi))[0]
    if len(inside) == 0:
        return out
    # continue outward from the point closest to the start of the branch
    i0 = inside[np.argmin(np.abs(E_values[inside]))]
    start = solve_bound(E_values[i0], params)
    out[i0] = start
    for direction in (1, -1):
        prev = start
        i = i0 + direction
        while 0 <= i < len(E_values) and lo <= E_values[i] <= hi:
            try:
                prev = refine_root(E_values[i], params, prev.delta1)
            except BranchError:
                break
            out[i] = prev
            i += direction
    return out


def bound_wavefunction(sol: BoundStateSolution, x) -> np.ndarray:
    """Normalized relative-coordinate profile ``N (A e^{i d1|x|} + C e^{i d2|x|})``."""
    ax = np.abs(np.asarray(x, dtype=float))
    return sol.N * (sol.A * np.exp(1j * sol.delta1 * ax) + sol.C * np.exp(1j * sol.delta2 * ax))


def t_bound(E, params: SystemParams) -> complex:
    return solve_bound(E, params).lam


def phase_bound(E_values, params: SystemParams) -> np.ndarray:
    """Unwrapped ``-i log t_B`` along a sorted frequency list."""
    sols = solve_branch(E_values, params)
    if any(s is None for s in sols):
        raise BranchError("frequency list leaves the bound branch")
    return np.unwrap(np.angle([s.lam for s in sols]))


@dataclass(frozen=True)
class BoundPhaseDerivatives:
    d1: float
    d3: float
    step: float


def phiB_derivatives(E, params: SystemParams, h: float | None = None) -> BoundPhaseDerivatives:
    """Centre-of-mass delay ``d1`` and distortion ``d3`` of the bound state at ``E``.

    Central differences over ``E +- h/2, +-h, +-2h`` with one Richardson
    step; phase differences are taken as arguments of eigenvalue ratios so no
    unwrapping is needed.  Default ``h = Gamma/25``.
    """
    G = params.Gamma
    h = G / 25.0 if h is None else h
    offs = np.array([-2 * h, -h, -0.5 * h, 0.5 * h, h, 2 * h])
    sols = solve_branch(E + offs, params)
    if any(s is None for s in sols):
        raise BranchError("finite-difference stencil leaves the bound branch")
    lam = {o: s.lam for o, s in zip(offs, sols)}

    def A(s):
        return float(np.angle(lam[s] / lam[-s]))

    def D1(s):
        return A(s) / (2 * s)

    def D3(s):
        return (A(2 * s) - 2 * A(s)) / (2 * s ** 3)

    offs_pos = sorted(o for o in offs if o > 0)
    h2, hh = offs_pos[0], offs_pos[1]
    d1 = (4 * D1(h2) - D1(hh)) / 3
    # D3 at h/2 needs +-h and +-h/2; at h it needs +-2h and +-h
    d3 = (4 * D3(h2) - D3(hh)) / 3
    return BoundPhaseDerivatives(d1, d3, h)


# --- perturbative (kappa >> Gamma) expressions --------------------------------

def perturbative_delta2(E, params: SystemParams) -> complex:
    G = params.Gamma
    return 0.5j * params.kappa + 1j * (E * E - 2 * G * G) / (4 * G)


def perturbative_t_bound(E, params: SystemParams) -> complex:
    G, kap = params.Gamma, params.kappa
    num = -2 * G * G + E * (1j * kap - 2 * E) + 2 * G * (kap + 1j * E)
    den = 2 * G * G + E * (1j * kap + 2 * E) - 2 * G * (kap - 1j * E)
    return num / den


def perturbative_delay(params: SystemParams) -> float:
    return 1.0 / params.Gamma + 3.0 / params.kappa


def perturbative_distortion(params: SystemParams) -> float:
    G = params.Gamma
    return -(1.0 - 3.0 * G / params.kappa) / (2.0 * G ** 3)


def perturbative_single_distortion(params: SystemParams) -> float:
    G = params.Gamma
    return -32.0 * (1.0 - 3.0 * G / params.kappa) / G ** 3


def perturbative_profile(E, params: SystemParams, x) -> np.ndarray:
    """Leading-order normalized relative profile (same normalization as :func:`bound_wavefunction`)."""
    G, kap = params.Gamma, params.kappa
    ax = np.abs(np.asarray(x, dtype=float))
    br = (kap / (G * G + G * kap) + 8 * G * G / (2 * G ** 3 + E * E * kap + 2 * G * kap * kap)
          + 2 * G ** 3 / (kap * kap * (E * E + 2 * G * (kap - G))))
    shape = (np.exp(-0.5 * G * (1 + G / kap) * ax)
             - G / kap * np.exp(-0.5 * kap * (1 + (E * E - 2 * G * G) / (2 * kap * G)) * ax))
    return shape / math.sqrt(4 * math.pi * br)


# --- projection of pulses onto the bound subspace ----------------------------

def default_E_grid(sigma: float, params: SystemParams, k0: float = 0.0, n_E: int = 401) -> np.ndarray:
    """``n_E`` points over ``2 k0 +- 10/sigma`` clipped to the bound branch."""
    lo, hi = branch_window(params)
    a = max(2 * k0 - 10.0 / sigma, lo)
    b = min(2 * k0 + 10.0 / sigma, hi)
    if a >= b:
        raise BranchError("pulse spectrum does not overlap the bound branch")
    return np.linspace(a, b, n_E)


def _trap_weights(E):
    w = np.empty_like(E)
    dE = np.diff(E)
    w[0] = 0.5 * dE[0]
    w[-1] = 0.5 * dE[-1]
    w[1:-1] = 0.5 * (dE[:-1] + dE[1:])
    return w


def _sm_layout(n):
    i = np.arange(n)
    s = i[:, None] + i[None, :]
    m = i[:, None] - i[None, :] + (n - 1)
    return s, m


def _profiles(sols, n, dt):
    tau = (np.arange(2 * n - 1) - (n - 1)) * dt
    B = np.zeros((len(sols), 2 * n - 1), dtype=complex)
    for k, s in enumerate(sols):
        if s is not None:
            B[k] = bound_wavefunction(s, tau)
    return B


def bound_overlaps(psi: TwoPhotonWavefunction, sols, E) -> np.ndarray:
    """``<B_E|psi>`` for each ``E`` (zero where ``sols`` is ``None``)."""
    g = psi.grid
    n = g.n_points
    s, m = _sm_layout(n)
    R = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    R[s, m] = psi.psi
    B = _profiles(sols, n, g.spacing)
    W = R @ B.conj().T                                 # (2n-1, n_E)
    tc = g.origin + 0.5 * g.spacing * np.arange(2 * n - 1)
    ph = np.exp(1j * np.outer(tc, E))
    return g.spacing ** 2 * np.sum(ph * W, axis=0)


def bound_reconstruct(grid: Grid1D, sols, E, amplitudes) -> TwoPhotonWavefunction:
    """``int dE amplitudes(E) B_E(t1, t2)`` on the lattice (trapezoid in E)."""
    n = grid.n_points
    s, m = _sm_layout(n)
    B = _profiles(sols, n, grid.spacing)
    tc = grid.origin + 0.5 * grid.spacing * np.arange(2 * n - 1)
    ph = np.exp(-1j * np.outer(tc, E)) * (amplitudes * _trap_weights(E))[None, :]
    full = ph @ B                                      # (2n-1 in s, 2n-1 in m)
    return TwoPhotonWavefunction(grid, full[s, m])


@dataclass(frozen=True)
class ProjectionResult:
    bound_psi: TwoPhotonWavefunction
    bound_fraction: float
    E: np.ndarray
    overlaps: np.ndarray
    solutions: list = field(repr=False)


def _as_two_photon(inp):
    if isinstance(inp, TwoPhotonWavefunction):
        return inp
    if isinstance(inp, SampledWaveform):
        return TwoPhotonWavefunction(inp.grid, np.outer(inp.amps, inp.amps))
    raise TypeError("input must be a product pulse (SampledWaveform) or a TwoPhotonWavefunction")


def bound_projection(inp, params: SystemParams, E_grid=None, sigma: float | None = None,
                     scatter: bool = False) -> ProjectionResult:
    """Component of ``inp`` in the bound subspace, optionally multiplied by ``t_B(E)``."""
    psi = _as_two_photon(inp)
    if E_grid is None:
        if sigma is None:
            raise ValueError("need E_grid or sigma to choose the frequency grid")
        E_grid = default_E_grid(sigma, params)
    E = np.asarray(E_grid, dtype=float)
    sols = solve_branch(E, params)
    c = bound_overlaps(psi, sols, E)
    frac = float(np.sum(np.abs(c) ** 2 * _trap_weights(E)) / psi.norm2())
    amp = c * np.array([s.lam if s is not None else 0.0 for s in sols]) if scatter else c
    out = bound_reconstruct(psi.grid, sols, E, amp)
    return ProjectionResult(out, frac, E, c, sols)


def project_and_scatter(inp, params: SystemParams, E_grid=None, sigma: float | None = None,
                        check_resolution: bool = False) -> ProjectionResult:
    """Scattered bound component ``int dE t_B(E) |B_E><B_E|in>`` on the input lattice.

    With ``check_resolution`` the bound fraction is recomputed on a grid with
    twice as many E points; a relative change above 1% raises
    :class:`ResolutionError`.
    """
    res = bound_projection(inp, params, E_grid, sigma, scatter=True)
    if check_resolution:
        fine = np.linspace(res.E[0], res.E[-1], 2 * len(res.E) - 1)
        psi = _as_two_photon(inp)
        c = bound_overlaps(psi, solve_branch(fine, params), fine)
        f2 = float(np.sum(np.abs(c) ** 2 * _trap_weights(fine)) / psi.norm2())
        if abs(f2 - res.bound_fraction) > 0.01 * max(res.bound_fraction, 1e-300):
            raise ResolutionError(f"bound fraction changes {res.bound_fraction:.4g} -> {f2:.4g} on refinement")
    return res


def relative_overlap(sol: BoundStateSolution, sigma: float) -> complex:
    """``int dx conj(b_E(x)) exp(-x^2 / (4 sigma^2))`` in closed form (unnormalized b_E)."""
    pre = 2.0 * sigma * math.sqrt(math.pi)
    return pre * (np.conj(sol.A) * erfcx(1j * np.conj(sol.delta1) * sigma)
                  + np.conj(sol.C) * erfcx(1j * np.conj(sol.delta2) * sigma))


def bound_fraction(spec: PulseSpec, params: SystemParams, n_E: int = 401,
                   check_resolution: bool = False) -> float:
    """Fraction of a two-photon Gaussian product pulse that lies in the bound subspace.

    Uses the analytic centre-of-mass integral; the relative-coordinate
    overlap is a complex error function.
    """
    E = default_E_grid(spec.sigma, params, spec.k0, n_E)
    frac = _fraction_on(E, spec, params)
    if check_resolution:
        f2 = _fraction_on(np.linspace(E[0], E[-1], 2 * n_E - 1), spec, params)
        if abs(f2 - frac) > 0.01 * frac:
            raise ResolutionError(f"bound fraction changes {frac:.4g} -> {f2:.4g} on refinement")
    return frac


def _fraction_on(E, spec, params):
    sols = solve_branch(E, params)
    s = spec.sigma
    dens = np.zeros(len(E))
    for i, sol in enumerate(sols):
        if sol is None:
            continue
        nu = relative_overlap(sol, s)
        dens[i] = sol.N ** 2 * abs(nu) ** 2 * math.exp(-0.5 * (E[i] - 2 * spec.k0) ** 2 * s * s)
    # the pulse's 1/(sigma sqrt(pi)) cancels the centre-of-mass Gaussian integral
    return float(np.sum(dens * _trap_weights(E)))


def bound_fraction_curve(sigma_gamma, params: SystemParams, n_E: int = 401, workers: int = 1):
    G = params.Gamma
    branch_window(params)
    specs = [PulseSpec(sg / G) for sg in sigma_gamma]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            return np.array(list(ex.map(lambda sp: bound_fraction(sp, params, n_E), specs)))
    return np.array([bound_fraction(sp, params, n_E) for sp in specs])


def write_solutions_json(sols, path, params: SystemParams | None = None) -> None:
    doc = {"solutions": [s.to_json() for s in sols if s is not None]}
    if params is not None:
        doc["params"] = params.to_ghz_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def read_solutions_json(path) -> list:
    with open(path) as fh:
        return [BoundStateSolution.from_json(d) for d in json.load(fh)["solutions"]]


def write_fraction_csv(sigma_gamma, fractions, path, params: SystemParams) -> None:
    G = params.Gamma
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sigma_gamma", "fwhm_ps", "bound_fraction"])
        for sg, f in zip(sigma_gamma, fractions):
            fwhm = 2 * math.sqrt(math.log(2)) * sg / G * PS_PER_NS
            wr.writerow([f"{sg:.9g}", f"{fwhm:.9g}", f"{f:.12e}"])
