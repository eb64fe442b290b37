"""Time-bin qudit states and their temporal wave-packet envelopes.

A photon spread over ``d`` consecutive time bins of duration ``T`` carries one
sin²-shaped intensity peak per bin.  The complex amplitude of bin ``k`` is
``c_k``; the full single-photon envelope is

    zeta(t) = sum_k c_k * s(t - k*T),    s(u) = sqrt(2/T) * sin(pi*u/T) on [0, T)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MAX_BINS = 8
DEFAULT_BIN_NS = 230.0


@dataclass(frozen=True)
class TimeBinQudit:
    """Normalized amplitudes over ``d`` time bins.

    Use :func:`make_qudit` to build one from magnitudes and phases; the
    constructor validates but does not renormalize.
    """

    amplitudes: np.ndarray
    bin_duration: float = DEFAULT_BIN_NS

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size < 1 or amps.size > MAX_BINS:
            raise ValueError(f"number of time bins must be in 1..{MAX_BINS}, got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        if not (math.isfinite(self.bin_duration) and self.bin_duration > 0):
            raise ValueError(f"bin_duration must be positive, got {self.bin_duration}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"amplitudes are not normalized (sum |c|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "bin_duration", float(self.bin_duration))

    @property
    def d(self) -> int:
        return self.amplitudes.size

    @property
    def weights(self) -> np.ndarray:
        """Bin occupation probabilities |c_k|^2."""
        return np.abs(self.amplitudes) ** 2

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.amplitudes)

    @property
    def total_duration(self) -> float:
        return self.d * self.bin_duration

    def envelope(self) -> "TemporalEnvelope":
        return TemporalEnvelope(self)

    def to_literal(self) -> dict:
        """Config-file literal (phases in radians)."""
        return {
            "d": self.d,
            "magnitudes": [float(m) for m in np.abs(self.amplitudes)],
            "phases_rad": [float(p) for p in self.phases],
            "bin_ns": self.bin_duration,
        }

    def __eq__(self, other):
        if not isinstance(other, TimeBinQudit):
            return NotImplemented
        return self.bin_duration == other.bin_duration and np.array_equal(
            self.amplitudes, other.amplitudes
        )

    def __hash__(self):
        return hash((self.amplitudes.tobytes(), self.bin_duration))


def make_qudit(d, magnitudes, phases, bin_duration=DEFAULT_BIN_NS) -> TimeBinQudit:
    """Build a normalized qudit with ``c_k = m_k exp(i phi_k) / norm``.

    Raises ``ValueError`` on a length mismatch, negative or non-finite
    magnitudes, non-finite phases, or all-zero magnitudes.
    """
    mags = np.asarray(magnitudes, dtype=float).ravel()
    phs = np.asarray(phases, dtype=float).ravel()
    if not isinstance(d, (int, np.integer)) or d < 1 or d > MAX_BINS:
        raise ValueError(f"d must be an integer in 1..{MAX_BINS}, got {d!r}")
    if mags.size != d or phs.size != d:
        raise ValueError(
            f"dimension mismatch: d={d}, {mags.size} magnitudes, {phs.size} phases"
        )
    if not (np.all(np.isfinite(mags)) and np.all(np.isfinite(phs))):
        raise ValueError("magnitudes and phases must be finite")
    if np.any(mags < 0):
        raise ValueError("magnitudes must be non-negative")
    norm = math.sqrt(float(np.sum(mags**2)))
    if norm == 0.0:
        raise ValueError("at least one magnitude must be non-zero")
    amps = mags * np.exp(1j * phs) / norm
    # absorb the rounding left by the division so the 1e-12 invariant always holds
    amps = amps / math.sqrt(float(np.sum(np.abs(amps) ** 2)))
    return TimeBinQudit(amps, bin_duration)


def equal_qudit(phases, bin_duration=DEFAULT_BIN_NS) -> TimeBinQudit:
    """Equal-weight qudit with the given per-bin phases."""
    phases = list(phases)
    return make_qudit(len(phases), [1.0] * len(phases), phases, bin_duration)


def local_oscillator(d, bin_duration=DEFAULT_BIN_NS) -> TimeBinQudit:
    """Reference photon: equal weights, no phase between bins."""
    return equal_qudit([0.0] * d, bin_duration)


def qudit_from_literal(spec: Mapping) -> TimeBinQudit:
    """Parse ``{"d":2, "magnitudes":[1,1], "phases_deg":[0,180], "bin_ns":230}``.

    Exactly one of ``phases_deg`` / ``phases_rad`` must be present.  ``d`` is
    optional and inferred from ``magnitudes`` when absent.
    """
    if not isinstance(spec, Mapping):
        raise ValueError(f"state literal must be a mapping, got {type(spec).__name__}")
    unknown = set(spec) - {"d", "magnitudes", "phases_deg", "phases_rad", "bin_ns"}
    if unknown:
        raise ValueError(f"unknown state keys: {sorted(unknown)}")
    if ("phases_deg" in spec) == ("phases_rad" in spec):
        raise ValueError("state literal needs exactly one of 'phases_deg' or 'phases_rad'")
    if "magnitudes" not in spec:
        raise ValueError("state literal is missing 'magnitudes'")
    mags = list(spec["magnitudes"])
    if "phases_deg" in spec:
        phases = [math.radians(float(p)) for p in spec["phases_deg"]]
    else:
        phases = [float(p) for p in spec["phases_rad"]]
    d = spec.get("d", len(mags))
    return make_qudit(int(d), mags, phases, float(spec.get("bin_ns", DEFAULT_BIN_NS)))


@dataclass(frozen=True)
class TemporalEnvelope:
    state: TimeBinQudit
    total_duration: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_duration", self.state.total_duration)

    @property
    def bin_duration(self) -> float:
        return self.state.bin_duration

    def amplitude(self, t):
        return envelope_amplitude(self, t)

    def density(self, t):
        return probability_density(self, t)


def bin_index(t, bin_duration):
    """Bin containing ``t``; a time exactly on ``k*T`` belongs to bin ``k``."""
    return np.floor(np.asarray(t, dtype=float) / bin_duration).astype(np.int64)


def single_bin_mode(u, bin_duration):
    """sqrt(2/T) sin(pi u / T) for u in [0, T), zero elsewhere."""
    u = np.asarray(u, dtype=float)
    inside = (u >= 0.0) & (u < bin_duration)
    out = np.sqrt(2.0 / bin_duration) * np.sin(np.pi * u / bin_duration)
    return np.where(inside, out, 0.0)


def envelope_amplitude(env: TemporalEnvelope, t):
    """Complex envelope zeta(t); 0 outside ``[0, d*T)``.

    Accepts scalars or arrays and returns the same shape.
    """
    T = env.bin_duration
    t = np.asarray(t, dtype=float)
    k = bin_index(t, T)
    valid = (k >= 0) & (k < env.state.d)
    c = np.where(valid, env.state.amplitudes[np.clip(k, 0, env.state.d - 1)], 0.0)
    out = c * single_bin_mode(t - k * T, T)
    return out[()] if out.ndim == 0 else out


def probability_density(env: TemporalEnvelope, t):
    """Detection probability density |zeta(t)|^2 in 1/ns."""
    return np.abs(envelope_amplitude(env, t)) ** 2


def within_bin_cdf(u, bin_duration):
    """CDF of the normalized sin² peak on [0, T]."""
    x = np.clip(np.asarray(u, dtype=float) / bin_duration, 0.0, 1.0)
    return x - np.sin(2.0 * np.pi * x) / (2.0 * np.pi)


_CDF_X = np.linspace(0.0, 1.0, 4097)
_CDF_F = _CDF_X - np.sin(2.0 * np.pi * _CDF_X) / (2.0 * np.pi)


def sample_within_bin(v, bin_duration, newton_steps=3):
    """Invert :func:`within_bin_cdf` for uniforms ``v``.

    A table lookup gives the starting point; Newton steps polish it to
    double precision.
    """
    v = np.asarray(v, dtype=float)
    x = np.interp(v, _CDF_F, _CDF_X)
    # the CDF is cubic at both ends, F ~ (2 pi^2 / 3) x^3, so seed from the series there
    edge = _CDF_F[1]
    lo, hi = v < edge, v > 1.0 - edge
    x = np.where(lo, np.cbrt(1.5 * np.clip(v, 0.0, None) / np.pi**2), x)
    x = np.where(hi, 1.0 - np.cbrt(1.5 * np.clip(1.0 - v, 0.0, None) / np.pi**2), x)
    for _ in range(newton_steps):
        f = 2.0 * np.sin(np.pi * x) ** 2
        step = np.divide(
            x - np.sin(2.0 * np.pi * x) / (2.0 * np.pi) - v, f,
            out=np.zeros_like(x), where=f > 1e-12,
        )
        x = np.clip(x - step, 0.0, 1.0)
    # keep samples inside [0, T) so they never land on the next bin
    return np.minimum(x * bin_duration, np.nextafter(bin_duration, 0.0))


def sample_times(state: TimeBinQudit, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw detection times (ns, relative to the photon start) from |zeta|^2."""
    bins = rng.choice(state.d, size=size, p=state.weights / state.weights.sum())
    u = sample_within_bin(rng.random(size), state.bin_duration)
    return bins * state.bin_duration + u


def envelope_grid(bin_duration, d, step=1.0):
    """Midpoint grid over ``[0, d*T)`` with spacing <= ``step``.

    The sin² peak vanishes at both bin edges, so the midpoint rule is exact
    for the normalization integral on any grid with >= 2 points per bin.
    """
    n_per_bin = max(2, int(math.ceil(bin_duration / step)))
    h = bin_duration / n_per_bin
    return (np.arange(d * n_per_bin) + 0.5) * h, h

