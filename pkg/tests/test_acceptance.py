"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line that is printed in the
pytest terminal summary (and immediately with ``-s``).
"""

from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from qudit_homodyne.correlator import WindowGeometry, analyze, fit_autocorrelation_peaks, rcp_matrix
from qudit_homodyne.experiment import calibrate_imperfections, phase_sweep, simulate_pair
from qudit_homodyne.mc_sim import P_BOTH, SourceConfig, simulate_stream
from qudit_homodyne.optics import IDEAL, Polarization, cross_bin_rcp_analytic, cross_bin_rcp_enumerated
from qudit_homodyne.qudit_state import equal_qudit, local_oscillator
from qudit_homodyne.tomography import DensityMatrixEstimate, fidelity, qudit_fidelity_pipeline

RESULTS: list = []

# perfect source and number-resolving detectors, no dark counts
EXACT = SourceConfig(emission_efficiency=1.0, detection_efficiency=1.0, dark_count_rate=0.0,
                     number_resolving=True)
PAIRS = 100_000
TRIGGERS_FOR_PAIRS = 420_000  # 1/4 of windows carry both photons
SWEEP_PHASES = np.arange(9) * math.pi / 4
SWEEP_SEEDS = 20
SWEEP_TRIGGERS = 600_000
SOFT_TARGETS = {2: 0.96, 3: 0.94, 4: 0.89}


def record(n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _pair_windows(events):
    return int(np.count_nonzero(np.bincount(events.trial[~events.dark], minlength=events.n_trials) == 2))


def test_1_fidelity_regression():
    sigma = DensityMatrixEstimate.from_matrix(0.5 * np.array([[1.01, -0.85], [-0.85, 0.99]]))
    f = fidelity(equal_qudit([0.0, math.pi]), sigma).fidelity
    record(1, abs(f - 0.962) <= 0.005, f"F = {f:.5f} (target 0.962 +- 0.005)")


def test_2_analytic_oracle_equivalence():
    lo = local_oscillator(2)
    worst = 0.0
    for phi in oracles.PHI_GRID:
        enum = cross_bin_rcp_enumerated(equal_qudit([0.0, phi]), lo)
        worst = max(worst, abs(enum - float(cross_bin_rcp_analytic(phi))), abs(enum - oracles.cross_bin_rcp(phi)))
    record(2, worst <= 1e-12, f"max |enumerated - analytic| over 17 phases = {worst:.2e} (tol 1e-12)")


def test_3_hom_limit():
    lo = local_oscillator(2)
    src = EXACT.replace(n_trigger_pairs=TRIGGERS_FOR_PAIRS, rng_seed=101)
    ev = simulate_stream(lo, lo, IDEAL, src)
    pairs = _pair_windows(ev)
    cross = analyze(ev, WindowGeometry(2)).n_coincidences
    ok = cross == 0 and pairs >= PAIRS
    record(3, ok, f"{cross} cross-port coincidences from {pairs} interfering pairs")


def test_4_anti_coalescence():
    sig = equal_qudit([0.0, math.pi])
    par, perp = simulate_pair(sig, local_oscillator(2), IDEAL,
                              EXACT.replace(n_trigger_pairs=TRIGGERS_FOR_PAIRS, rng_seed=102))
    rcp = rcp_matrix(par, perp, WindowGeometry(2))
    diag = np.diag(rcp.entries)
    off = np.array([rcp.entries[0, 1], rcp.entries[1, 0]])
    off_sig = np.array([rcp.sigma[0, 1], rcp.sigma[1, 0]])
    pairs = _pair_windows(par)
    ok = bool(np.all(diag < 0.02) and np.all(np.abs(off - 2.0) <= 3 * off_sig) and pairs >= PAIRS)
    record(4, ok, f"diag = {np.round(diag, 4).tolist()}, off-diag = {np.round(off, 3).tolist()} "
                  f"+- {np.round(off_sig, 3).tolist()} ({pairs} pairs)")


def test_5_reference_autocorrelation():
    details, ok = [], True
    for d in (2, 3, 4):
        lo = local_oscillator(d)
        ev = simulate_stream(lo, lo, IDEAL.with_polarization(Polarization.PERPENDICULAR),
                             EXACT.replace(n_trigger_pairs=200_000, rng_seed=105 + d))
        fit = fit_autocorrelation_peaks(analyze(ev, WindowGeometry(d)), lo.bin_duration, d)
        ref = oracles.satellite_weights(d)
        expected = ref * fit.amplitude.sum() / ref.sum()
        z = np.abs(fit.amplitude - expected) / fit.sigma
        ok &= bool(np.all(z <= 3))
        ratios = fit.amplitude / fit.amplitude[0]
        details.append(f"d={d}: {':'.join(f'{r:.2f}' for r in ratios)} (max {z.max():.1f} sigma)")
    record(5, ok, "; ".join(details))


def test_6_phase_sweep():
    # ideal apparatus: strengths follow 1 - cos(phi)
    ideal = phase_sweep(SWEEP_PHASES, IDEAL, EXACT.replace(n_trigger_pairs=200_000, rng_seed=106))
    dev = max(abs(p.strength - (1 - math.cos(p.phase))) / p.sigma for p in ideal.points)
    ideal_ok = ideal.chi2.passed

    settings, source = calibrate_imperfections(0.96)
    passes, top, bottom = 0, [], []
    for seed in range(SWEEP_SEEDS):
        res = phase_sweep(SWEEP_PHASES, settings, source.replace(n_trigger_pairs=SWEEP_TRIGGERS, rng_seed=seed))
        passes += res.chi2.passed
        top += [(p.strength, p.sigma) for p in res.points if abs(p.phase - math.pi) < 1e-9]
        bottom += [(p.strength, p.sigma) for p in res.points if abs(math.cos(p.phase) - 1) < 1e-9]

    def pooled(rows):
        v, s = np.array(rows).T
        w = 1 / s**2
        return float(np.sum(w * v) / np.sum(w)), float(1 / math.sqrt(np.sum(w)))

    hi, hi_s = pooled(top)
    lo, lo_s = pooled(bottom)
    narrowed = hi + 3 * hi_s < 2.0 and lo - 3 * lo_s > 0.0
    need = math.ceil(0.9 * SWEEP_SEEDS)
    ok = ideal_ok and narrowed and passes >= need
    record(6, ok, f"ideal chi2 {ideal.chi2.statistic:.1f}/{ideal.chi2.dof} (max {dev:.1f} sigma); "
                  f"calibrated range [{lo:.3f}, {hi:.3f}] inside (0, 2); "
                  f"chi2 passed in {passes}/{SWEEP_SEEDS} seeds (need {need})")


def test_7_fidelity_ordering():
    settings, source = calibrate_imperfections(0.96)
    src = source.replace(n_trigger_pairs=2_000_000, rng_seed=107)
    fids = {}
    for d in (2, 3, 4):
        target = equal_qudit([0.0 if k % 2 == 0 else math.pi for k in range(d)])
        par, perp = simulate_pair(target, local_oscillator(d), settings, src)
        fids[d] = qudit_fidelity_pipeline(par, perp, target).fidelity.fidelity
    ordered = fids[2] > fids[3] > fids[4]
    soft = ", ".join(f"d={d} {fids[d]:.3f} vs {SOFT_TARGETS[d]} "
                     f"({'within' if abs(fids[d] - SOFT_TARGETS[d]) <= 0.02 else 'outside'} +-0.02)"
                     for d in (2, 3, 4))
    record(7, ordered, f"F2 > F3 > F4 is {ordered}; soft targets: {soft} "
                       f"[mu = {settings.mode_overlap:.4f}, dark = {source.dark_count_rate:.3e}/ns]")


def test_8_property_suites():
    import test_correlator
    import test_mc_sim
    import test_optics
    import test_tomography

    checks = {
        "density-matrix Hermiticity/trace": test_tomography.test_hermitian_unit_trace,
        "pure-state round trip": test_tomography.test_pure_state_round_trip,
        "histogram tau-symmetry (port swap)": test_correlator.test_port_swap_mirrors_histogram,
        "histogram tau-symmetry (identical envelopes)":
            test_correlator.test_identical_envelopes_give_symmetric_histogram,
        "G symmetry and non-negativity": test_optics.test_density_symmetric_and_nonnegative,
        "mu=0 equals perpendicular": test_optics.test_zero_overlap_equals_perpendicular,
        "seed determinism": test_mc_sim.test_seed_determinism,
    }
    failed = []
    for name, fn in checks.items():
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report every failing suite
            failed.append(f"{name} ({type(exc).__name__})")
    record(8, not failed, f"{len(checks) - len(failed)}/{len(checks)} property suites green"
                          + (f"; failing: {', '.join(failed)}" if failed else ""))
