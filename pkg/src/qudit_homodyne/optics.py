"""Two-photon interference of time-bin photons on a 50:50 beam splitter.

Signal enters port A, the local oscillator (LO) port B.  With
``a_A -> (a_C + a_D)/sqrt2`` and ``a_B -> (a_C - a_D)/sqrt2`` the joint
detection densities for one click at ``t1`` and one at ``t2`` are

    cross port (C at t1, D at t2):  G   = 1/4 [S - 2 I]
    same port  (both C, or both D): G_s = 1/4 [S + 2 I]   (ordered-pair density)

with ``S = |zS(t1)|^2 |zL(t2)|^2 + |zS(t2)|^2 |zL(t1)|^2`` and
``I = mu * kappa(t1 - t2) * Re[zS(t1) zL(t2) zS*(t2) zL*(t1)]``.
Perpendicular polarization sets ``I = 0``.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .qudit_state import TemporalEnvelope, TimeBinQudit, envelope_amplitude, envelope_grid

PORTS = ("C", "D")


class Polarization(str, enum.Enum):
    PARALLEL = "parallel"
    PERPENDICULAR = "perpendicular"


class CoherenceKernel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class InterferenceSettings:
    """How well signal and LO photons interfere.

    ``coherence_time`` may be ``math.inf`` for perfectly coherent photons.
    ``mode_overlap`` scales the interference term to account for residual
    polarization or spatial-mode mismatch.
    """

    polarization: Polarization = Polarization.PARALLEL
    coherence_time: float = 500.0
    coherence_kernel: CoherenceKernel = CoherenceKernel.GAUSSIAN
    mode_overlap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        object.__setattr__(self, "coherence_kernel", CoherenceKernel(self.coherence_kernel))
        tc = float(self.coherence_time)
        if not tc > 0:
            raise ValueError(f"coherence_time must be > 0, got {self.coherence_time}")
        mu = float(self.mode_overlap)
        if not 0.0 <= mu <= 1.0:
            raise ValueError(f"mode_overlap must lie in [0, 1], got {self.mode_overlap}")
        object.__setattr__(self, "coherence_time", tc)
        object.__setattr__(self, "mode_overlap", mu)

    def with_polarization(self, polarization) -> "InterferenceSettings":
        return InterferenceSettings(
            polarization, self.coherence_time, self.coherence_kernel, self.mode_overlap
        )

    @property
    def interference_weight(self) -> float:
        """Prefactor of the interference term (0 for perpendicular photons)."""
        if self.polarization is Polarization.PERPENDICULAR:
            return 0.0
        return self.mode_overlap

    def kernel(self, tau):
        return coherence_kernel(tau, self.coherence_time, self.coherence_kernel)


IDEAL = InterferenceSettings(coherence_time=math.inf)


def coherence_kernel(tau, coherence_time, kind=CoherenceKernel.GAUSSIAN):
    """kappa(tau): exp(-(tau/tc)^2) or exp(-|tau|/tc); identically 1 for tc = inf."""
    tau = np.asarray(tau, dtype=float)
    if math.isinf(coherence_time):
        return np.ones_like(tau)
    if CoherenceKernel(kind) is CoherenceKernel.GAUSSIAN:
        return np.exp(-((tau / coherence_time) ** 2))
    return np.exp(-np.abs(tau) / coherence_time)


@dataclass(frozen=True)
class ModePairWeight:
    """Amplitude of one two-photon output configuration.

    ``out1`` and ``out2`` are ``(port, bin)`` tuples.  For indistinguishable
    photons the pair is unordered and canonically sorted; for distinguishable
    photons ``out1`` belongs to the signal photon and ``out2`` to the LO.
    """

    out1: tuple
    out2: tuple
    amplitude: complex

    @property
    def probability(self) -> float:
        return abs(self.amplitude) ** 2

    @property
    def cross_port(self) -> bool:
        return self.out1[0] != self.out2[0]

    @property
    def cross_bin(self) -> bool:
        return self.out1[1] != self.out2[1]


def two_photon_output_expansion(signal: TimeBinQudit, lo: TimeBinQudit, distinguishable=False):
    """Expand ``a+_A(signal) a+_B(lo)|0>`` into beam-splitter output modes.

    Every time bin is a separate mode pair (C_k, D_k).  Doubly-occupied modes
    pick up the bosonic sqrt(2), so the squared amplitudes always sum to 1.
    With ``distinguishable=True`` the photons carry orthogonal polarizations
    and no symmetrization takes place.
    """
    if signal.d != lo.d:
        raise ValueError(f"dimension mismatch: signal d={signal.d}, LO d={lo.d}")
    # a+_A -> (C + D)/sqrt2, a+_B -> (C - D)/sqrt2
    split_a = {"C": 1 / math.sqrt(2), "D": 1 / math.sqrt(2)}
    split_b = {"C": 1 / math.sqrt(2), "D": -1 / math.sqrt(2)}

    coeffs = defaultdict(complex)
    for j, k in itertools.product(range(signal.d), repeat=2):
        base = signal.amplitudes[j] * lo.amplitudes[k]
        if base == 0:
            continue
        for pa, pb in itertools.product(PORTS, repeat=2):
            m1, m2 = (pa, j), (pb, k)
            key = (m1, m2) if distinguishable else tuple(sorted((m1, m2)))
            coeffs[key] += base * split_a[pa] * split_b[pb]

    terms = []
    for (m1, m2), c in sorted(coeffs.items()):
        if not distinguishable and m1 == m2:
            c *= math.sqrt(2.0)
        terms.append(ModePairWeight(m1, m2, complex(c)))
    return terms


def cross_bin_rcp_analytic(phase_difference):
    """Ideal cross-bin relative coincidence probability, ``1 - cos(phi)``."""
    return 1.0 - np.cos(phase_difference)


def cross_bin_rcp_enumerated(signal: TimeBinQudit, lo: TimeBinQudit, bins=(0, 1)) -> float:
    """Cross-bin RCP obtained by summing expansion terms.

    Parallel (symmetrized) cross-port probability for detections in the two
    given bins, divided by the same quantity for distinguishable photons.
    """
    pair = set(bins)

    def cross_prob(terms):
        return sum(
            t.probability
            for t in terms
            if t.cross_port and {t.out1[1], t.out2[1]} == pair and t.cross_bin
        )

    par = cross_prob(two_photon_output_expansion(signal, lo))
    ref = cross_prob(two_photon_output_expansion(signal, lo, distinguishable=True))
    return par / ref


def _check_envelopes(signal: TemporalEnvelope, lo: TemporalEnvelope):
    if signal.bin_duration != lo.bin_duration:
        raise ValueError(
            f"mismatched bin durations: {signal.bin_duration} vs {lo.bin_duration}"
        )


def pair_terms(signal: TemporalEnvelope, lo: TemporalEnvelope, settings, t1, t2):
    """Return ``(S, I)`` evaluated at ``(t1, t2)`` (broadcasting)."""
    zs1, zs2 = envelope_amplitude(signal, t1), envelope_amplitude(signal, t2)
    zl1, zl2 = envelope_amplitude(lo, t1), envelope_amplitude(lo, t2)
    direct = np.abs(zs1) ** 2 * np.abs(zl2) ** 2 + np.abs(zs2) ** 2 * np.abs(zl1) ** 2
    w = settings.interference_weight
    if w == 0.0:
        return direct, np.zeros_like(direct)
    exchange = np.real(zs1 * zl2 * np.conj(zs2) * np.conj(zl1))
    return direct, w * settings.kernel(np.asarray(t1) - np.asarray(t2)) * exchange


def joint_coincidence_density(signal, lo, settings: InterferenceSettings, t1, t2):
    """Cross-port density G(t1, t2) in 1/ns^2 for a C click at t1 and D click at t2."""
    signal, lo = _as_envelope(signal), _as_envelope(lo)
    _check_envelopes(signal, lo)
    direct, interf = pair_terms(signal, lo, settings, t1, t2)
    return np.maximum(0.25 * (direct - 2.0 * interf), 0.0)


def same_port_density(signal, lo, settings: InterferenceSettings, t1, t2):
    """Ordered-pair density for both photons leaving through one given port.

    Integrating over the full (t1, t2) plane counts every unordered pair
    twice, so the probability for that port is half the integral.
    """
    signal, lo = _as_envelope(signal), _as_envelope(lo)
    _check_envelopes(signal, lo)
    direct, interf = pair_terms(signal, lo, settings, t1, t2)
    return 0.25 * (direct + 2.0 * interf)


def _as_envelope(x):
    return x.envelope() if isinstance(x, TimeBinQudit) else x


def _grid(signal, step):
    return envelope_grid(signal.bin_duration, signal.state.d, step)


def coincidence_grid(signal, lo, settings, step=1.0):
    """Cross-port density on a midpoint grid: ``(t, h, G)`` with ``G[i, j] = G(t_i, t_j)``."""
    signal, lo = _as_envelope(signal), _as_envelope(lo)
    _check_envelopes(signal, lo)
    t, h = _grid(signal, step)
    G = joint_coincidence_density(signal, lo, settings, t[:, None], t[None, :])
    return t, h, G


def total_coincidence_probability(signal, lo, settings, step=1.0) -> float:
    """Probability that the two photons leave through different ports."""
    _, h, G = coincidence_grid(signal, lo, settings, step)
    return float(G.sum() * h * h)


def bin_pair_coincidence(signal, lo, settings, step=1.0) -> np.ndarray:
    """Cross-port probability per virtual-detector cell: ``P[i, j]`` for C in bin i, D in bin j."""
    signal, lo = _as_envelope(signal), _as_envelope(lo)
    t, h, G = coincidence_grid(signal, lo, settings, step)
    d = signal.state.d
    n = t.size // d
    return G.reshape(d, n, d, n).sum(axis=(1, 3)) * h * h


def coincidence_density_vs_delay(signal, lo, settings, taus, step=1.0):
    """h(tau) = integral of G(t, t - tau) dt, the delay distribution of C-D coincidences."""
    signal, lo = _as_envelope(signal), _as_envelope(lo)
    _check_envelopes(signal, lo)
    t, h = _grid(signal, step)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.empty(taus.size)
    for i, tau in enumerate(taus):
        out[i] = joint_coincidence_density(signal, lo, settings, t, t - tau).sum() * h
    return out


@functools.lru_cache(maxsize=256)
def _mean_kernel(coherence_time, kind, bin_duration, separation, step):
    T = bin_duration
    n = max(2, int(math.ceil(T / step)))
    u = (np.arange(n) + 0.5) * T / n
    w = np.sin(np.pi * u / T) ** 2
    weight = w[:, None] * w[None, :]
    k = coherence_kernel(u[:, None] - u[None, :] - separation * T, coherence_time, kind)
    return float((weight * k).sum() / weight.sum())


def mean_cross_bin_kernel(settings: InterferenceSettings, bin_duration=230.0, separation=1, step=1.0):
    """Envelope-weighted average of kappa over detection pairs ``separation`` bins apart."""
    return _mean_kernel(
        settings.coherence_time, settings.coherence_kernel, float(bin_duration),
        int(separation), float(step),
    )


def side_peak_visibility(settings: InterferenceSettings, bin_duration=230.0, separation=1) -> float:
    """V = mu * <kappa> for the satellite ``separation`` bins from the centre (0 if perpendicular)."""
    return settings.interference_weight * mean_cross_bin_kernel(settings, bin_duration, separation)


def expected_side_peak_strength(
    phase,
    settings: InterferenceSettings,
    background_rcp=0.0,
    bin_duration=230.0,
    separation=1,
    accidental_fraction=0.0,
):
    """Model RCP of the satellite at ``separation * T``.

    ``1 - V (1 - f) cos(phase) + background_rcp`` with ``V = mu <kappa>``.
    ``accidental_fraction`` ``f`` is the share of reference coincidences in the
    satellite that involve a dark count; such coincidences appear equally in
    both polarization runs and dilute the interference contrast.
    """
    if background_rcp < 0:
        raise ValueError("background_rcp must be >= 0")
    if not 0.0 <= accidental_fraction < 1.0:
        raise ValueError("accidental_fraction must lie in [0, 1)")
    v = side_peak_visibility(settings, bin_duration, separation)
    return 1.0 - v * (1.0 - accidental_fraction) * np.cos(phase) + background_rcp
