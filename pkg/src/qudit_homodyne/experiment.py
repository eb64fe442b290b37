"""End-to-end runs: paired polarization records, phase sweeps, calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .correlator import (
    Chi2Result,
    WindowGeometry,
    analyze,
    chi2_model_test,
    estimate_accidentals,
    side_peak_strength,
)
from .mc_sim import P_BOTH, SourceConfig, simulate_stream
from .optics import InterferenceSettings, Polarization, expected_side_peak_strength, mean_cross_bin_kernel
from .qudit_state import TimeBinQudit, equal_qudit, local_oscillator


def run_seeds(seed, n=2):
    """Independent child seeds for the runs of one experiment."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def simulate_pair(signal: TimeBinQudit, lo: TimeBinQudit, settings: InterferenceSettings, source: SourceConfig):
    """Parallel and perpendicular records from independent seeds derived from ``source.rng_seed``."""
    s_par, s_perp = run_seeds(source.rng_seed)
    par = simulate_stream(signal, lo, settings.with_polarization(Polarization.PARALLEL),
                          source.replace(rng_seed=s_par))
    perp = simulate_stream(signal, lo, settings.with_polarization(Polarization.PERPENDICULAR),
                           source.replace(rng_seed=s_perp))
    return par, perp


def half_half_dark_rate(mode_overlap, source: SourceConfig, bin_duration=230.0) -> float:
    """Dark-count rate that makes dark coincidences half of the qubit same-bin residual.

    Per same-bin virtual-detector cell of a twin-peak photon the reference
    rate is ``P_both eta^2 / 8`` per window, of which a fraction
    ``1 - mu`` survives in the parallel run.  Photon-dark accidentals add
    ``2 (eta/4) r T``.  Equating the two gives ``r``.
    """
    eta = source.photon_click_probability
    mismatch = (1.0 - mode_overlap) * P_BOTH * eta**2 / 8.0
    return mismatch / (0.5 * eta * bin_duration)


def predicted_qubit_fidelity(mode_overlap, settings: InterferenceSettings, bin_duration=230.0) -> float:
    """Fidelity expected from the half/half background model for a phi = pi qubit."""
    kappa = mean_cross_bin_kernel(settings, bin_duration, 1)
    acc = (1.0 - mode_overlap) / (2.0 - mode_overlap)
    v_max = 1.0 + mode_overlap * kappa * (1.0 - acc)
    return math.sqrt(0.5 * (1.0 + math.sqrt(v_max / 2.0)))


def calibrate_imperfections(target_fidelity=0.96, coherence_time=500.0, kernel="gaussian",
                            source: SourceConfig = None, bin_duration=230.0):
    """Pick mode overlap and dark rate so a qubit reaches ``target_fidelity``.

    The background of the parallel run is split evenly between dark counts
    and mode mismatch.  Returns ``(settings, source)``.
    """
    source = source or SourceConfig()
    base = InterferenceSettings(coherence_time=coherence_time, coherence_kernel=kernel)

    def gap(mu):
        return predicted_qubit_fidelity(mu, base, bin_duration) - target_fidelity

    if gap(1.0) < 0:
        raise ValueError(f"target fidelity {target_fidelity} is unreachable with this coherence time")
    mu = brentq(gap, 1e-6, 1.0, xtol=1e-12)
    settings = InterferenceSettings(coherence_time=coherence_time, coherence_kernel=kernel, mode_overlap=mu)
    return settings, source.replace(dark_count_rate=half_half_dark_rate(mu, source, bin_duration))


@dataclass
class SweepPoint:
    phase: float
    separation: int
    strength: float
    sigma: float
    model: float


@dataclass
class SweepResult:
    points: list
    chi2: Chi2Result
    accidental_fraction: float

    def rows(self):
        return [(p.phase, p.strength, p.sigma) for p in self.points]


def phase_sweep(phases, settings: InterferenceSettings, source: SourceConfig, d=2, bin_duration=230.0,
                background_rcp=0.0, estimate_background=True, confidence=0.95) -> SweepResult:
    """Simulate and analyse one signal per phase against a shared reference run.

    The signal carries phase ``k * phi`` in bin ``k``; the first satellites
    (``tau = +-T``) are compared with :func:`expected_side_peak_strength`.
    With ``estimate_background`` the dark-count share of the reference
    satellites is measured from the photon-free part of the windows.
    """
    phases = [float(p) for p in phases]
    if not phases:
        raise ValueError("empty phase list")
    geometry = WindowGeometry(d, bin_duration, source.repetition_period)
    lo = local_oscillator(d, bin_duration)
    seeds = run_seeds(source.rng_seed, len(phases) + 1)
    perp = simulate_stream(lo, lo, settings.with_polarization(Polarization.PERPENDICULAR),
                           source.replace(rng_seed=seeds[0]))
    h_perp = analyze(perp, geometry)
    acc = 0.0
    if estimate_background:
        a = estimate_accidentals(perp, geometry)
        cells = [(i, i - k) for k in (1, -1) for i in range(d) if 0 <= i - k < d]
        ref = sum(int(h_perp.pair_counts[c]) for c in cells)
        acc = min(sum(a[c] for c in cells) / ref, 0.99) if ref else 0.0
    points = []
    par_settings = settings.with_polarization(Polarization.PARALLEL)
    for phi, seed in zip(phases, seeds[1:]):
        signal = equal_qudit([k * phi for k in range(d)], bin_duration)
        par = simulate_stream(signal, lo, par_settings, source.replace(rng_seed=seed))
        peaks = side_peak_strength(analyze(par, geometry), h_perp)
        model = float(expected_side_peak_strength(phi, par_settings, background_rcp, bin_duration, 1, acc))
        for k, r, s in zip(peaks.separation, peaks.strength, peaks.sigma):
            if abs(k) == 1:
                points.append(SweepPoint(phi, int(k), float(r), float(s), model))
    chi2 = chi2_model_test(
        [(p.phase, p.strength, p.sigma) for p in points],
        lambda phi: expected_side_peak_strength(phi, par_settings, background_rcp, bin_duration, 1, acc),
        confidence,
    )
    return SweepResult(points, chi2, acc)
