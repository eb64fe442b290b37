"""Monte Carlo generation of time-tagged detection events.

The source alternates signal and LO photons every ``repetition_period``.  A
polarizing beam splitter sends each photon either through a one-period fibre
delay or straight to the 50:50 beam splitter, so per trigger window

* both photons arrive together with probability 1/4 and interfere,
* exactly one photon arrives with probability 1/2,
* nothing arrives with probability 1/4.

Individual fibre paths are not tracked.  Emission and detection losses thin
the photons; dark counts are Poisson on each detector over the full record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .events import EventStream
from .optics import InterferenceSettings, pair_terms
from .qudit_state import TimeBinQudit, sample_times

P_BOTH = 0.25
P_ONE = 0.5
CHUNK_TRIALS = 100_000


@dataclass(frozen=True)
class SourceConfig:
    """Source timing, losses and detector behaviour.

    The default ``detection_efficiency`` together with the 85 % emission
    efficiency gives a 20 % end-to-end click probability per photon.
    ``dark_count_rate`` is in counts per ns per detector.  Detectors are
    threshold devices unless ``number_resolving`` is set: two photons in one
    port then give a single click at the earlier detection time.
    """

    repetition_period: float = 1000.0
    emission_efficiency: float = 0.85
    detection_efficiency: float = 0.235
    dark_count_rate: float = 1e-7
    n_trigger_pairs: int = 10_000
    rng_seed: int = 0
    number_resolving: bool = False
    dead_time: float = 0.0

    def __post_init__(self):
        problems = validate_source(self)
        if problems:
            raise ValueError("invalid source configuration: " + "; ".join(problems))

    def replace(self, **changes) -> "SourceConfig":
        return replace(self, **changes)

    @property
    def photon_click_probability(self) -> float:
        return self.emission_efficiency * self.detection_efficiency


def validate_source(src: SourceConfig) -> list:
    problems = []
    if not (math.isfinite(src.repetition_period) and src.repetition_period > 0):
        problems.append(f"repetition_period must be > 0 (got {src.repetition_period})")
    if not 0 < src.emission_efficiency <= 1:
        problems.append(f"emission_efficiency must be in (0, 1] (got {src.emission_efficiency})")
    if not 0 <= src.detection_efficiency <= 1:
        problems.append(f"detection_efficiency must be in [0, 1] (got {src.detection_efficiency})")
    if not (math.isfinite(src.dark_count_rate) and src.dark_count_rate >= 0):
        problems.append(f"dark_count_rate must be >= 0 (got {src.dark_count_rate})")
    if int(src.n_trigger_pairs) != src.n_trigger_pairs or src.n_trigger_pairs < 0:
        problems.append(f"n_trigger_pairs must be a non-negative integer (got {src.n_trigger_pairs})")
    if int(src.rng_seed) != src.rng_seed or src.rng_seed < 0:
        problems.append(f"rng_seed must be a non-negative integer (got {src.rng_seed})")
    if not src.dead_time >= 0:
        problems.append(f"dead_time must be >= 0 (got {src.dead_time})")
    return problems


def sample_detection_times(signal: TimeBinQudit, lo: TimeBinQudit, settings: InterferenceSettings,
                           rng: np.random.Generator, size=None):
    """Sample output times and ports for interfering photon pairs.

    Returns ``(t1, t2, port1, port2)`` with ports coded 0 = C, 1 = D.  Times
    are drawn from the symmetric mixture ``(S(t1,t2))/2``; given the times,
    the photons split with probability ``(1 - 2I/S)/2`` and otherwise leave
    together through a random port.  This reproduces the cross-port density
    ``(S - 2I)/4`` and the same-port density ``(S + 2I)/4`` exactly, so no
    rejection step is needed.
    """
    if signal.d != lo.d or signal.bin_duration != lo.bin_duration:
        raise ValueError("signal and LO must share d and bin_duration")
    n = 1 if size is None else int(size)
    ts = sample_times(signal, rng, n)
    tl = sample_times(lo, rng, n)
    swap = rng.random(n) < 0.5
    t1 = np.where(swap, tl, ts)
    t2 = np.where(swap, ts, tl)
    direct, interf = pair_terms(signal.envelope(), lo.envelope(), settings, t1, t2)
    ratio = np.divide(2.0 * interf, direct, out=np.zeros_like(direct), where=direct > 0)
    p_cross = np.clip(0.5 * (1.0 - ratio), 0.0, 1.0)
    cross = rng.random(n) < p_cross
    shared = (rng.random(n) < 0.5).astype(np.int8)
    port1 = np.where(cross, np.int8(0), shared)
    port2 = np.where(cross, np.int8(1), shared)
    if size is None:
        return float(t1[0]), float(t2[0]), int(port1[0]), int(port2[0])
    return t1, t2, port1, port2


def _simulate_chunk(signal, lo, settings, source, first, n, rng):
    eta_d = source.detection_efficiency
    u = rng.random(n)
    both = u < P_BOTH
    one = (u >= P_BOTH) & (u < P_BOTH + P_ONE)
    emitted_s = rng.random(n) < source.emission_efficiency
    emitted_l = rng.random(n) < source.emission_efficiency
    lo_arrives = rng.random(n) < 0.5

    pair = both & emitted_s & emitted_l
    single_s = (both & emitted_s & ~emitted_l) | (one & ~lo_arrives & emitted_s)
    single_l = (both & ~emitted_s & emitted_l) | (one & lo_arrives & emitted_l)

    trials, dets, times = [], [], []

    idx = np.flatnonzero(pair)
    t1, t2, p1, p2 = sample_detection_times(signal, lo, settings, rng, idx.size)
    seen1 = rng.random(idx.size) < eta_d
    seen2 = rng.random(idx.size) < eta_d
    split = p1 != p2
    if source.number_resolving:
        keep1, keep2 = seen1, seen2
    else:
        merged = ~split & seen1 & seen2
        keep1 = seen1 & ~(merged & (t2 < t1))
        keep2 = seen2 & ~(merged & (t1 <= t2))
    for keep, t, p in ((keep1, t1, p1), (keep2, t2, p2)):
        trials.append(idx[keep])
        dets.append(p[keep])
        times.append(t[keep])

    for mask, state in ((single_s, signal), (single_l, lo)):
        idx = np.flatnonzero(mask)
        t = sample_times(state, rng, idx.size)
        port = (rng.random(idx.size) < 0.5).astype(np.int8)
        seen = rng.random(idx.size) < eta_d
        trials.append(idx[seen])
        dets.append(port[seen])
        times.append(t[seen])

    period = source.repetition_period
    trial = np.concatenate(trials) + first
    t_abs = trial * period + np.concatenate(times)
    det = np.concatenate(dets).astype(np.int8)
    dark = np.zeros(trial.size, bool)

    if source.dark_count_rate > 0 and n > 0:
        span = n * period
        dark_t, dark_d = [], []
        for code in (0, 1):
            k = rng.poisson(source.dark_count_rate * span)
            dark_t.append(first * period + rng.random(k) * span)
            dark_d.append(np.full(k, code, np.int8))
        dark_t = np.concatenate(dark_t)
        dark_trial = np.minimum(np.floor(dark_t / period).astype(np.int64), first + n - 1)
        trial = np.concatenate([trial, dark_trial])
        t_abs = np.concatenate([t_abs, dark_t])
        det = np.concatenate([det] + dark_d)
        dark = np.concatenate([dark, np.ones(dark_t.size, bool)])
    return trial, det, t_abs, dark


def _apply_dead_time(stream: EventStream, dead_time: float) -> EventStream:
    keep = np.ones(len(stream), bool)
    for code in (0, 1):
        idx = np.flatnonzero(stream.detector == code)
        last = -np.inf
        for i in idx:
            t = stream.timestamp[i]
            if t - last < dead_time:
                keep[i] = False
            else:
                last = t
    return stream.select(keep)


def simulate_stream(signal: TimeBinQudit, lo: TimeBinQudit, settings: InterferenceSettings,
                    source: SourceConfig) -> EventStream:
    """Generate the detection record of ``source.n_trigger_pairs`` trigger windows.

    Output is deterministic in ``source.rng_seed``.  Trials are processed in
    fixed-size chunks, each with its own spawned random stream, so chunk
    results are independent and come out in trial order.
    """
    if signal.d != lo.d:
        raise ValueError(f"dimension mismatch: signal d={signal.d}, LO d={lo.d}")
    if signal.bin_duration != lo.bin_duration:
        raise ValueError("signal and LO must share bin_duration")
    if signal.total_duration >= source.repetition_period:
        raise ValueError(
            f"photon duration {signal.total_duration} ns does not fit in the "
            f"{source.repetition_period} ns repetition period"
        )
    n_total = int(source.n_trigger_pairs)
    n_chunks = -(-n_total // CHUNK_TRIALS)
    seeds = np.random.SeedSequence(int(source.rng_seed)).spawn(n_chunks)
    parts = []
    for c, seed in enumerate(seeds):
        first = c * CHUNK_TRIALS
        n = min(CHUNK_TRIALS, n_total - first)
        parts.append(_simulate_chunk(signal, lo, settings, source, first, n, np.random.default_rng(seed)))
    if not parts:
        return EventStream.empty(n_trials=0)
    trial, det, t_abs, dark = (np.concatenate(cols) for cols in zip(*parts))
    stream = EventStream(trial, det, t_abs, dark, n_trials=n_total)
    if source.dead_time > 0:
        stream = _apply_dead_time(stream, source.dead_time)
    return stream
