import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from cavitydimer import harness as hs
from cavitydimer.pulsegrid import Grid1D, PulseSpec, make_gaussian, pulse_grid
from cavitydimer.qed_core import SystemParams
from cavitydimer.twophoton import TwoPhotonWavefunction


@pytest.fixture(scope="module")
def device_co(device):
    spec = PulseSpec(2.2 / device.Gamma)
    return hs.coherent_output(spec, device, 0.5)


def _separable(n_bar=0.5):
    g = Grid1D(128, 0.01, -0.64)
    f = make_gaussian(PulseSpec(0.08), g)
    return hs.CoherentOutput(n_bar, f, TwoPhotonWavefunction(g, np.outer(f.amps, f.amps)))


@given(st.floats(0.0, 10.0))
def test_truncated_weights(n):
    w = hs.truncated_weights(n)
    assert w.sum() == pytest.approx(1.0)
    assert w[1] * n / 2 == pytest.approx(w[2], abs=1e-15)


def test_truncated_weights_invalid():
    with pytest.raises(ValueError):
        hs.truncated_weights(-0.1)


def test_observables_resonant(device):
    spec = PulseSpec(2.2 / device.Gamma)
    with pytest.warns(RuntimeWarning):
        hs.observables(spec, device, n_bar=0.1)
    obs = hs.observables(spec, device)
    assert obs.G1.max() == 1.0 and obs.G2_diag.max() == 1.0
    assert obs.G2_map.normalization == "unit-peak"
    tau1, tau2 = obs.delays["tau1"], obs.delays["tau2"]
    # the distorted short-pulse peak is not at 4/Gamma
    assert abs(tau1 - 4 / device.Gamma) > 0.01
    assert tau1 > tau2 > 4 / device.kappa
    again = hs.observables(spec, device)
    assert again.delays == obs.delays and np.array_equal(again.G2_map.counts, obs.G2_map.counts)


def test_observables_long_pulse(device):
    spec = PulseSpec(26.0 / device.Gamma)
    obs = hs.observables(spec, device, grid=pulse_grid(spec.sigma, device, n_points=1024))
    assert obs.delays["tau1"] * 1e3 == pytest.approx(150.0, abs=1.0)
    # the equal-time peak mixes bound (~61 ps) and extended (~150 ps) delays and settles near 70 ps
    assert 61.3 < obs.delays["tau2"] * 1e3 < 75.0


def test_observables_bare_cavity(device):
    p = SystemParams(g=0.0, kappa=device.kappa)
    obs = hs.observables(PulseSpec(20.0 / device.Gamma), p)
    assert obs.delays["tau1"] == pytest.approx(4 / p.kappa, rel=1e-3)
    assert obs.delays["tau2"] == pytest.approx(obs.delays["tau1"], abs=1e-5)


def test_sample_tags_deterministic(device_co):
    a = hs.sample_tags(device_co, 200_000, seed=11)
    b = hs.sample_tags(device_co, 200_000, seed=11, workers=3)
    assert a.records.tobytes() == b.records.tobytes()
    c = hs.sample_tags(device_co, 200_000, seed=12)
    assert a.records.tobytes() != c.records.tobytes()
    with pytest.raises(ValueError):
        hs.sample_tags(device_co, 0, seed=1)


def test_tag_stream_structure(device_co):
    tags = hs.sample_tags(device_co, 100_000, seed=5)
    assert len(tags.records) == tags.n_single + 2 * tags.n_pair
    for ch in (0, 1):
        assert np.all(np.diff(tags.channel(ch).astype(np.int64)) >= 0)
    pulse = tags.records["timestamp"] // np.uint64(tags.period_ps)
    _, counts = np.unique(pulse, return_counts=True)
    assert counts.max() <= 2
    # channel split is 50:50
    n0 = np.count_nonzero(tags.records["channel"] == 0)
    assert abs(n0 - len(tags.records) / 2) < 4 * np.sqrt(len(tags.records)) / 2


def test_pair_single_ratio(device):
    co = hs.coherent_output(PulseSpec(2.2 / device.Gamma), device, 0.01)
    tags = hs.sample_tags(co, 1_000_000, seed=2)
    ratio = tags.n_pair / tags.n_single
    sigma = ratio * np.sqrt(1 / tags.n_pair + 1 / tags.n_single)
    assert abs(ratio - 0.01 / 2) < 3 * sigma


def test_singles_histogram_matches_g1(device_co):
    tags = hs.sample_tags(device_co, 1_000_000, seed=3)
    edges = hs.histogram_edges(device_co.psi1.grid, 4)
    obs = hs.histogram1d(tags, edges)
    assert obs.sum() == tags.n_single
    assert hs.chi2_per_bin(obs, hs.expected_single_hist(device_co.psi1, edges)) < 2
    # all tags (including pair photons) do not follow G1
    both = hs.histogram1d(tags, edges, singles_only=False)
    assert both.sum() == len(tags.records)


def test_pair_map_converges(device_co):
    edges = hs.histogram_edges(device_co.psi1.grid, 8)
    expected = hs.expected_pair_map(device_co.psi2, edges)
    l1 = []
    for n in (100_000, 1_000_000):
        cmap = hs.correlate(hs.sample_tags(device_co, n, seed=4), edges)
        l1.append(np.abs(cmap.counts / cmap.counts.sum() - expected).sum())
    assert l1[1] < l1[0]


def test_tags_show_diagonal_clustering(device_co, device):
    edges = hs.histogram_edges(device_co.psi1.grid, 8)
    counts = hs.correlate(hs.sample_tags(device_co, 300_000, seed=6), edges).counts
    c = 0.5 * (edges[1:] + edges[:-1])
    near = np.abs(c[:, None] - c[None, :]) < 1.0 / device.Gamma
    lin = np.abs(np.outer(device_co.psi1.amps, device_co.psi1.amps)) ** 2
    lin_map = hs.expected_pair_map(TwoPhotonWavefunction(device_co.psi1.grid, np.sqrt(lin)), edges)
    assert counts[near].sum() / counts.sum() > lin_map[near].sum()


def test_separable_map_is_outer_product():
    co = _separable()
    edges = hs.histogram_edges(co.psi1.grid, 4)
    m = hs.correlate(hs.sample_tags(co, 400_000, seed=8), edges).counts
    outer = np.outer(m.sum(1), m.sum(0)) / m.sum()
    keep = outer > 20
    chi2 = np.sum((m[keep] - outer[keep]) ** 2 / outer[keep]) / keep.sum()
    assert chi2 < 2


def test_swap_channels_transposes(device_co):
    tags = hs.sample_tags(device_co, 100_000, seed=9)
    edges = hs.histogram_edges(device_co.psi1.grid, 8)
    a = hs.correlate(tags, edges).counts
    b = hs.correlate(hs.swap_channels(tags), edges).counts
    assert np.array_equal(a, b.T)


def test_correlate_empty(device_co):
    co = hs.CoherentOutput(0.0, device_co.psi1, device_co.psi2)
    tags = hs.sample_tags(co, 1000, seed=1)
    assert len(tags.records) == 0
    m = hs.correlate(tags, hs.histogram_edges(co.psi1.grid, 8))
    assert m.counts.sum() == 0 and m.normalization == "raw"


def test_hat_weights_are_exact():
    g = Grid1D(32, 0.1, 0.0)
    y = np.random.default_rng(0).uniform(size=32)
    edges = np.array([0.0, 0.05, 0.37, 1.2, 3.1])
    W = hs._hat_weights(g, edges)
    # integral of the piecewise-linear interpolant over each bin
    ref = [quad(lambda t: np.interp(t, g.points, y), a, b, points=g.points[(g.points > a) & (g.points < b)],
                limit=200)[0] / g.spacing for a, b in zip(edges[:-1], edges[1:])]
    assert np.allclose(W @ y, ref, rtol=1e-10)


def test_period(device_co):
    assert hs.default_period_ps(device_co.psi1.grid) == 12500
    long = Grid1D(1024, 0.05)
    assert hs.default_period_ps(long) > long.length * 1e3


def test_ptag_round_trip(tmp_path, device_co):
    tags = hs.sample_tags(device_co, 10_000, seed=1)
    hs.write_ptag(tags, tmp_path / "t.ptag")
    raw = (tmp_path / "t.ptag").read_bytes()
    assert raw[:5] == b"PTAG1" and len(raw) == 5 + 9 * len(tags.records)
    assert np.array_equal(hs.read_ptag(tmp_path / "t.ptag"), tags.records)
    (tmp_path / "bad.ptag").write_bytes(b"XXXXX")
    with pytest.raises(ValueError):
        hs.read_ptag(tmp_path / "bad.ptag")


def test_chi2_guard():
    with pytest.raises(ValueError):
        hs.chi2_per_bin(np.zeros(4), np.full(4, 0.25))
