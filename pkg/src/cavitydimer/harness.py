"""Coherent-pulse observables and a Monte-Carlo time-tag pipeline.

The input coherent state is truncated at two photons: vacuum, one and two
photon components carry weights proportional to ``1, n_bar, n_bar^2 / 2``.
Three-photon events are never produced, so no G3 statistics exist here.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .pulsegrid import Grid1D, PulseSpec, SampledWaveform, peak_delay, pulse_grid
from .qed_core import PS_PER_NS, SystemParams
from .twophoton import CorrelationMap, TwoPhotonWavefunction, g2_map, scatter_two

TAG_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])   # packed, 9 bytes
MAGIC = b"PTAG1"
CHUNK_PULSES = 1 << 16
LOW_N_BAR = 0.05


def truncated_weights(n_bar: float) -> np.ndarray:
    """Probabilities of 0, 1 and 2 photons in the truncated coherent state."""
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    w = np.array([1.0, n_bar, 0.5 * n_bar * n_bar])
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class CoherentOutput:
    n_bar: float
    psi1: SampledWaveform
    psi2: TwoPhotonWavefunction

    @property
    def weights(self) -> np.ndarray:
        return truncated_weights(self.n_bar)


def coherent_output(spec: PulseSpec, params: SystemParams, n_bar: float,
                    grid: Grid1D | None = None) -> CoherentOutput:
    out = scatter_two(spec, params, grid=grid)
    return CoherentOutput(n_bar, out.single, out.psi)


@dataclass(frozen=True, eq=False)
class Observables:
    t: np.ndarray
    G1: np.ndarray
    G2_map: CorrelationMap
    G2_diag: np.ndarray
    delays: dict
    output: CoherentOutput


def observables(spec: PulseSpec, params: SystemParams, n_bar: float = 0.01,
                grid: Grid1D | None = None) -> Observables:
    """G1, G2 and the peak delays (ns) of one- and two-photon components.

    Delays are measured against the unscattered pulse, which peaks at t = 0.
    """
    if n_bar > LOW_N_BAR:
        warnings.warn(f"n_bar={n_bar} is outside the weak-drive regime of the two-photon truncation",
                      RuntimeWarning)
    if grid is None:
        grid = pulse_grid(spec.sigma, params if params.g > 0 else None, n_points=512)
    co = coherent_output(spec, params, n_bar, grid)
    g1 = co.psi1.intensity()
    diag = co.psi2.diagonal()
    d2 = np.abs(diag.amps) ** 2
    delays = {"tau1": peak_delay(co.psi1, 0.0), "tau2": peak_delay(diag, 0.0)}
    return Observables(grid.points, g1 / g1.max(), g2_map(co.psi2, n_bar), d2 / d2.max(), delays, co)


# --- time tags -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TagStream:
    """Merged two-channel tag records plus the pulse clock needed to read them."""

    records: np.ndarray
    period_ps: int
    origin: float          # detection time (ns) of relative timestamp 0
    n_pulses: int
    n_single: int
    n_pair: int

    def channel(self, ch: int) -> np.ndarray:
        return self.records["timestamp"][self.records["channel"] == ch]


def _linear_inverse(alpha, beta, u):
    """Inverse CDF on [0, 1] of the density proportional to ``alpha (1-x) + beta x``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    s = alpha + beta
    d = beta - alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        # alpha x + d x^2 / 2 = u s / 2
        disc = np.sqrt(np.maximum(alpha * alpha + d * u * s, 0.0))
        x = np.where(np.abs(d) > 1e-12 * np.maximum(s, 1e-300), (disc - alpha) / d, u)
    return np.clip(x, 0.0, 1.0)


class _Sampler:
    """Inverse-CDF samplers over lattice cells with linear / bilinear in-cell densities."""

    def __init__(self, co: CoherentOutput):
        self.weights = co.weights
        g = co.psi1.grid
        self.t0 = g.origin
        self.dt = g.spacing
        p1 = np.abs(co.psi1.amps) ** 2
        self.a1, self.b1 = p1[:-1], p1[1:]
        self.c1 = np.cumsum(0.5 * (self.a1 + self.b1))
        self.c1 /= self.c1[-1]
        p2 = np.abs(co.psi2.psi) ** 2
        self.q = (p2[:-1, :-1], p2[1:, :-1], p2[:-1, 1:], p2[1:, 1:])  # corners (i,j),(i+1,j),(i,j+1),(i+1,j+1)
        m = 0.25 * sum(self.q)
        self.n2 = m.shape[1]
        self.c2 = np.cumsum(m.ravel())
        self.c2 /= self.c2[-1]

    def singles(self, rng, n):
        k = np.minimum(np.searchsorted(self.c1, rng.random(n), side="right"), len(self.c1) - 1)
        x = _linear_inverse(self.a1[k], self.b1[k], rng.random(n))
        return self.t0 + self.dt * (k + x)

    def pairs(self, rng, n):
        k = np.minimum(np.searchsorted(self.c2, rng.random(n), side="right"), len(self.c2) - 1)
        i, j = np.divmod(k, self.n2)
        a, b, c, d = (q[i, j] for q in self.q)
        # marginal along the first axis, then the conditional along the second
        u = _linear_inverse(a + c, b + d, rng.random(n))
        v = _linear_inverse((1 - u) * a + u * b, (1 - u) * c + u * d, rng.random(n))
        return self.t0 + self.dt * (i + u), self.t0 + self.dt * (j + v)


def default_period_ps(grid: Grid1D) -> int:
    """Pulse period: 12.5 ns, or longer when the detection window needs it."""
    return int(max(12500, math.ceil((grid.length + 2 * grid.spacing) * PS_PER_NS) + 1000))


def _chunk(args):
    sampler, seed_seq, start, n, period, origin = args
    rng = np.random.default_rng(seed_seq)
    counts = rng.choice(3, size=n, p=sampler.weights)
    pulse = start + np.arange(n, dtype=np.uint64)
    one = pulse[counts == 1]
    two = pulse[counts == 2]
    t1 = sampler.singles(rng, len(one))
    ta, tb = sampler.pairs(rng, len(two))
    pidx = np.concatenate([one, two, two])
    times = np.concatenate([t1, ta, tb])
    ch = rng.integers(0, 2, size=len(times), dtype=np.uint8)
    rel = np.rint((times - origin) * PS_PER_NS).astype(np.uint64)
    rec = np.empty(len(times), dtype=TAG_DTYPE)
    rec["channel"] = ch
    rec["timestamp"] = pidx * np.uint64(period) + rel
    return rec, len(one), len(two)


def sample_tags(output: CoherentOutput, n_pulses: int, seed: int, period_ps: int | None = None,
                workers: int = 1) -> TagStream:
    """Emulate two detectors behind a 50:50 splitter for ``n_pulses`` pulses.

    The stream is deterministic for a fixed seed regardless of ``workers``:
    pulses are processed in fixed-size chunks, each with its own spawned seed.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    grid = output.psi1.grid
    period = default_period_ps(grid) if period_ps is None else int(period_ps)
    origin = grid.origin
    sampler = _Sampler(output)
    starts = list(range(0, n_pulses, CHUNK_PULSES))
    seeds = np.random.SeedSequence(seed).spawn(len(starts))
    jobs = [(sampler, s, st, min(CHUNK_PULSES, n_pulses - st), period, origin) for s, st in zip(seeds, starts)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    rec = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, TAG_DTYPE)
    rec = rec[np.argsort(rec["timestamp"], kind="stable")]
    return TagStream(rec, period, origin, n_pulses, sum(p[1] for p in parts), sum(p[2] for p in parts))


def swap_channels(tags: TagStream) -> TagStream:
    rec = tags.records.copy()
    rec["channel"] = 1 - rec["channel"]
    return TagStream(rec, tags.period_ps, tags.origin, tags.n_pulses, tags.n_single, tags.n_pair)


def _relative(tags: TagStream, ts):
    idx = ts // np.uint64(tags.period_ps)
    rel = (ts - idx * np.uint64(tags.period_ps)).astype(float)
    return idx, tags.origin + rel / PS_PER_NS


def histogram1d(tags: TagStream, edges, singles_only: bool = True) -> np.ndarray:
    """Pulse-synchronized arrival-time histogram of both channels.

    With ``singles_only`` only pulses that produced exactly one tag count,
    which isolates the one-photon component.
    """
    idx, t = _relative(tags, tags.records["timestamp"])
    if singles_only:
        u, inv, cnt = np.unique(idx, return_inverse=True, return_counts=True)
        t = t[cnt[inv] == 1]
    return np.histogram(t, bins=edges)[0]


def correlate(tags: TagStream, edges) -> CorrelationMap:
    """Pulse-synchronized coincidence histogram over (channel 0 time, channel 1 time).

    ``edges`` are bin edges in ns, shared by both axes.  Every pairing of a
    channel-0 and a channel-1 tag from the same pulse counts once.
    """
    edges = np.asarray(edges, dtype=float)
    counts = np.zeros((len(edges) - 1, len(edges) - 1))
    rec = tags.records
    i0, t0 = _relative(tags, rec["timestamp"][rec["channel"] == 0])
    i1, t1 = _relative(tags, rec["timestamp"][rec["channel"] == 1])
    if len(i0) == 0 or len(i1) == 0:
        return CorrelationMap(edges, counts, "raw")
    o0 = np.argsort(i0, kind="stable")
    o1 = np.argsort(i1, kind="stable")
    i0, t0, i1, t1 = i0[o0], t0[o0], i1[o1], t1[o1]
    # all (a, b) with i0[a] == i1[b], via the matching run in the other sorted stream
    lo = np.searchsorted(i1, i0, side="left")
    hi = np.searchsorted(i1, i0, side="right")
    n = hi - lo
    a = np.repeat(np.arange(len(i0)), n)
    b = np.repeat(lo, n) + (np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n))
    counts += np.histogram2d(t0[a], t1[b], bins=[edges, edges])[0]
    return CorrelationMap(edges, counts, "raw")


def histogram_edges(grid: Grid1D, coarsen: int = 1) -> np.ndarray:
    """Bin edges (ns) about ``coarsen`` lattice cells wide, placed on half-picosecond
    offsets so that every 1 ps-quantized tag falls in the bin of its true time."""
    n_cells = grid.n_points - 1
    k = np.arange(0, n_cells + 1, coarsen)
    off_ps = np.rint(grid.spacing * k * PS_PER_NS) - 0.5
    return grid.origin + off_ps / PS_PER_NS


def _hat_weights(grid: Grid1D, edges) -> np.ndarray:
    """``W[k, i]`` = integral over bin ``k`` of the linear-interpolation hat of lattice point ``i``."""
    t = grid.points
    e = np.clip(np.asarray(edges, dtype=float), t[0], t[-1])

    def H(z):
        return np.where(z < -1, 0.0, np.where(z < 0, 0.5 * (1 + z) ** 2,
                                               np.where(z < 1, 1 - 0.5 * (1 - z) ** 2, 1.0)))

    z = (e[:, None] - t[None, :]) / grid.spacing
    C = H(z)
    return C[1:] - C[:-1]


def expected_single_hist(psi1: SampledWaveform, edges) -> np.ndarray:
    """Probability per bin under the linearly interpolated ``|psi1|^2``."""
    m = _hat_weights(psi1.grid, edges) @ (np.abs(psi1.amps) ** 2)
    return m / m.sum()


def expected_pair_map(psi2: TwoPhotonWavefunction, edges) -> np.ndarray:
    """Probability per (channel-0, channel-1) bin under the bilinearly interpolated ``|psi2|^2``."""
    W = _hat_weights(psi2.grid, edges)
    m = W @ (np.abs(psi2.psi) ** 2) @ W.T
    return m / m.sum()


def chi2_per_bin(observed, expected_prob, min_expected: float = 5.0) -> float:
    """Pearson chi-square per populated bin (expected count at least ``min_expected``)."""
    obs = np.asarray(observed, dtype=float).ravel()
    exp = np.asarray(expected_prob, dtype=float).ravel() * obs.sum()
    keep = exp >= min_expected
    if not np.any(keep):
        raise ValueError("no bin reaches the minimum expected count")
    return float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]) / keep.sum())


def write_ptag(tags: TagStream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.ascontiguousarray(tags.records, dtype=TAG_DTYPE).tobytes())


def read_ptag(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a PTAG1 file")
        return np.frombuffer(fh.read(), dtype=TAG_DTYPE)
