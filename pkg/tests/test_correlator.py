import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qudit_homodyne.correlator import (
    WindowGeometry,
    analyze,
    assign_virtual_detector,
    build_histogram,
    chi2_model_test,
    cross_period_reference,
    estimate_accidentals,
    fit_autocorrelation_peaks,
    normalize_histogram,
    rcp_from_histograms,
    rcp_matrix,
    side_peak_strength,
    sin2_autocorrelation,
    sliding_sum,
    virtual_bins,
)
from qudit_homodyne.events import DetectionEvent, EventStream
from qudit_homodyne.experiment import simulate_pair
from qudit_homodyne.mc_sim import SourceConfig, simulate_stream
from qudit_homodyne.optics import IDEAL, Polarization, coincidence_density_vs_delay
from qudit_homodyne.qudit_state import equal_qudit, local_oscillator

T = 230.0
EXACT = SourceConfig(emission_efficiency=1.0, detection_efficiency=1.0, dark_count_rate=0.0,
                     number_resolving=True, n_trigger_pairs=200_000, rng_seed=21)
PERP = IDEAL.with_polarization(Polarization.PERPENDICULAR)


@pytest.fixture(scope="module")
def qubit_pi():
    sig, lo = equal_qudit([0, math.pi]), local_oscillator(2)
    par, perp = simulate_pair(sig, lo, IDEAL, EXACT)
    g = WindowGeometry(2)
    return par, perp, analyze(par, g), analyze(perp, g)


def _swap_ports(ev):
    return EventStream(ev.trial, 1 - ev.detector, ev.timestamp, ev.dark, n_trials=ev.n_trials)


@pytest.mark.parametrize("offset, port, expected", [
    (1.5 * T, "C", ("C", 1)),
    (T, "D", ("D", 1)),
    (0.0, "C", ("C", 0)),
    (2 * T, "C", None),
    (-1.0, "D", None),
])
def test_assign_virtual_detector(offset, port, expected):
    vd = assign_virtual_detector(DetectionEvent(port, 5000.0 + offset, 5), 5000.0, T, 2)
    if expected is None:
        assert vd is None
    else:
        assert (vd.port, vd.bin) == expected
        assert vd.label == f"{port}{expected[1] + 1}"


def test_virtual_bins_vectorized():
    ev = EventStream([0, 0, 1, 1], [0, 1, 0, 1], [10.0, 230.0, 1460.0, 1900.0])
    assert list(virtual_bins(ev, WindowGeometry(2))) == [0, 1, -1, -1]


def test_sliding_sum():
    counts = np.zeros(200, int)
    counts[100] = 5
    w = sliding_sum(counts, 60, 1)
    assert w.sum() == 5 * 60
    # the window around tau covers [tau - 30, tau + 30)
    assert w[100] == 5 and w[71] == 5 and w[70] == 0 and w[130] == 5 and w[131] == 0


def test_empty_record():
    h = build_histogram(EventStream.empty(10), max_tau=100)
    assert h.counts.sum() == 0
    with pytest.raises(ValueError):
        normalize_histogram(h, EventStream.empty(10), 1000.0)


def test_too_short_record():
    ev = EventStream([0, 0], [0, 1], [1.0, 2.0], n_trials=2)
    with pytest.raises(ValueError):
        cross_period_reference(ev)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
def test_port_swap_mirrors_histogram(seed, phi):
    src = SourceConfig(n_trigger_pairs=3000, rng_seed=seed, dark_count_rate=1e-5)
    ev = simulate_stream(equal_qudit([0, phi]), local_oscillator(2), IDEAL, src)
    a = build_histogram(ev, max_tau=500)
    b = build_histogram(_swap_ports(ev), max_tau=500)
    assert np.array_equal(a.counts, b.counts[::-1])


def test_identical_envelopes_give_symmetric_histogram():
    lo = local_oscillator(2)
    src = EXACT.replace(n_trigger_pairs=200_000, rng_seed=3)
    ev = simulate_stream(lo, lo, PERP, src)
    h = analyze(ev, WindowGeometry(2))
    w = h.counts.reshape(-1, 50).sum(axis=1).astype(float)  # 50 ns windows, symmetric about 0
    m = w[::-1]
    sig = np.sqrt(w + m)
    ok = sig > 0
    assert np.all(np.abs(w - m)[ok] <= 3 * sig[ok] + 1)


@pytest.mark.filterwarnings("ignore:some RCP cells")
def test_self_rcp_is_one(qubit_pi):
    par, _, hp, _ = qubit_pi
    rcp = rcp_from_histograms(hp, hp)
    np.testing.assert_array_equal(rcp.entries[rcp.defined], 1.0)


def test_rcp_count_conservation(qubit_pi):
    par, _, hp, _ = qubit_pi
    valid = virtual_bins(par, WindowGeometry(2)) >= 0
    c = par.detector == 0
    nc = np.bincount(par.trial[valid & c], minlength=par.n_trials)
    nd = np.bincount(par.trial[valid & ~c], minlength=par.n_trials)
    assert hp.pair_counts.sum() == int(np.dot(nc, nd))


def test_perpendicular_density_matches_model(qubit_pi):
    _, perp, _, hq = qubit_pi
    sig, lo = equal_qudit([0, math.pi]), local_oscillator(2)
    # total in-window coincidence probability of distinguishable photons
    assert float(hq.density.sum() * hq.tau_bin_width) == pytest.approx(0.5, abs=0.02)
    coarse = 23
    sel = slice(1000 - 460, 1000 + 460)
    obs = hq.counts[sel].reshape(-1, coarse).sum(axis=1)
    model = coincidence_density_vs_delay(sig, lo, PERP, hq.tau[sel]).reshape(-1, coarse).sum(axis=1)
    expected = model * hq.normalization
    keep = expected > 20
    z = (obs[keep] - expected[keep]) / np.sqrt(expected[keep])
    assert np.mean(z**2) < 2.0


def test_parallel_pi_qubit_central_peak_vanishes(qubit_pi):
    _, _, hp, hq = qubit_pi
    # same-bin coincidences make up the central peak
    assert np.trace(hp.pair_counts) < 0.02 * np.trace(hq.pair_counts)
    fit = fit_autocorrelation_peaks(hp, T, 2)
    assert fit.amplitude[1] == pytest.approx(0, abs=0.01)
    assert fit.amplitude[0] == pytest.approx(fit.amplitude[2], rel=0.1)


def test_rcp_matrix_qubit(qubit_pi):
    _, _, hp, hq = qubit_pi
    rcp = rcp_from_histograms(hp, hq)
    assert np.all(np.diag(rcp.entries) < 0.02)
    off = rcp.entries[[0, 1], [1, 0]]
    assert np.all(np.abs(off - 2.0) < 3 * rcp.sigma[[0, 1], [1, 0]] + 0.06)
    js = rcp.to_json()
    assert js["d"] == 2 and len(js["rcp"]) == 2 and "counts_perp" in js


def test_rcp_matrix_qutrit():
    sig, lo = equal_qudit([0, math.pi, 0]), local_oscillator(3)
    par, perp = simulate_pair(sig, lo, IDEAL, EXACT.replace(n_trigger_pairs=200_000, rng_seed=5))
    rcp = rcp_matrix(par, perp, WindowGeometry(3))
    e, s = rcp.entries, rcp.sigma
    for i, j, target in [(0, 1, 2.0), (1, 2, 2.0), (0, 2, 0.0)]:
        for a, b in ((i, j), (j, i)):
            assert abs(e[a, b] - target) < 3 * s[a, b] + 0.05
    assert np.all(np.diag(e) < 0.03)


@pytest.mark.filterwarnings("ignore:some RCP cells")
def test_undefined_cells_flagged():
    ev = EventStream([0, 0] * 1 + [5, 6], [0, 1, 0, 1], [10.0, 20.0, 5010.0, 6020.0], n_trials=20)
    empty_ref = EventStream([3, 9], [0, 1], [3010.0, 9020.0], n_trials=20)
    g = WindowGeometry(2)
    rcp = rcp_from_histograms(analyze(ev, g, n_shifts=1), analyze(empty_ref, g, n_shifts=6))
    assert not rcp.defined.any()
    assert all(v is None for row in rcp.to_json()["rcp"] for v in row)


def test_dark_counts_only_flat_against_reference():
    src = SourceConfig(n_trigger_pairs=100_000, detection_efficiency=0.0, dark_count_rate=2e-5, rng_seed=2)
    ev = simulate_stream(equal_qudit([0, 0]), local_oscillator(2), IDEAL, src)
    h = analyze(ev, WindowGeometry(2))
    inner = np.abs(h.tau) < 900
    ratio = h.density[inner].sum() / h.reference_density[inner].sum()
    n = h.counts[inner].sum()
    assert abs(ratio - 1) < 3 / math.sqrt(n) * math.sqrt(1 + 1 / h.n_reference_shifts) + 1e-3


@pytest.mark.parametrize("d", [2, 3, 4])
def test_perpendicular_satellite_ratios(d):
    lo = local_oscillator(d)
    ev = simulate_stream(lo, lo, PERP, EXACT.replace(n_trigger_pairs=100_000, rng_seed=d))
    h = analyze(ev, WindowGeometry(d))
    fit = fit_autocorrelation_peaks(h, T, d)
    ref = oracles.satellite_weights(d)
    scale = fit.amplitude.sum() / ref.sum()
    assert np.all(np.abs(fit.amplitude - scale * ref) < 3 * fit.sigma + 1e-3)


def test_sin2_autocorrelation_integrates_to_one():
    tau = np.arange(-T, T, 0.01) + 0.005
    assert sin2_autocorrelation(tau, T).sum() * 0.01 == pytest.approx(1.0, abs=1e-6)


def test_side_peaks_ideal_limits(qubit_pi):
    _, _, hp, hq = qubit_pi
    peaks = side_peak_strength(hp, hq)
    assert list(peaks.separation) == [-1, 1]
    assert np.all(np.abs(peaks.strength - 2.0) < 3 * peaks.sigma + 0.05)
    window = side_peak_strength(hp, hq, method="window")
    # window integration picks up the tail of the empty central peak in the reference
    assert np.all(window.strength < peaks.strength)
    with pytest.raises(ValueError):
        side_peak_strength(hp, hq, method="nope")


def test_side_peaks_phi_zero():
    lo = local_oscillator(2)
    par, perp = simulate_pair(lo, lo, IDEAL, EXACT.replace(n_trigger_pairs=50_000))
    g = WindowGeometry(2)
    peaks = side_peak_strength(analyze(par, g), analyze(perp, g))
    assert np.all(peaks.strength < 0.02)


def test_accidentals_zero_without_dark_counts(qubit_pi):
    _, perp, _, _ = qubit_pi
    np.testing.assert_array_equal(estimate_accidentals(perp, WindowGeometry(2)), 0)


def test_chi2_examples():
    pts = [(p, 1 - math.cos(p), 0.1) for p in np.linspace(0, 6, 9)]
    res = chi2_model_test(pts, lambda p: 1 - math.cos(p))
    assert res.statistic == 0 and res.passed
    off = chi2_model_test([(p, v + 1.0, s) for p, v, s in pts], lambda p: 1 - math.cos(p))
    assert not off.passed
    single = chi2_model_test([(0.3, 1 - math.cos(0.3), 1.0)], lambda p: 1 - math.cos(p))
    assert single.statistic == 0.0
    stat, ok = single
    assert ok
    with pytest.raises(ValueError):
        chi2_model_test([(0.0, 1.0, 0.0)], lambda p: 1.0)
    with pytest.raises(ValueError):
        chi2_model_test([], lambda p: 1.0)


def test_chi2_self_consistency():
    rng = np.random.default_rng(0)
    phases = np.linspace(0, 2 * math.pi, 9)
    model = lambda p: 1 - 0.8 * math.cos(p)
    passes = 0
    for _ in range(200):
        expected = np.array([model(p) for p in phases]) * 400
        counts = rng.poisson(expected)
        pts = [(p, c / 400, math.sqrt(max(c, 1)) / 400) for p, c in zip(phases, counts)]
        passes += chi2_model_test(pts, model).passed
    assert passes >= 180
