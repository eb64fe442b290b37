"""Coincidence analysis of time-tagged homodyne records.

All pair counting is restricted to C-D pairs whose events belong to the same
trigger window (``trial`` index).  Cross-period pairs, i.e. events ``k``
windows apart, come from photons that never met at the beam splitter and
provide the normalization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .events import EventStream

DEFAULT_REFERENCE_SHIFTS = 5


@dataclass(frozen=True)
class WindowGeometry:
    """Where the time bins sit inside each trigger window."""

    d: int
    bin_duration: float = 230.0
    period: float = 1000.0
    offset: float = 0.0

    def __post_init__(self):
        if not 1 <= int(self.d) <= 8:
            raise ValueError(f"d must be in 1..8, got {self.d}")
        if not self.bin_duration > 0:
            raise ValueError("bin_duration must be > 0")
        if self.offset < 0 or self.offset + self.d * self.bin_duration > self.period:
            raise ValueError("time bins must fit inside the repetition period")

    @property
    def photon_duration(self) -> float:
        return self.d * self.bin_duration


@dataclass(frozen=True)
class VirtualDetector:
    port: str
    bin: int  # 0-based

    @property
    def label(self) -> str:
        return f"{self.port}{self.bin + 1}"


def assign_virtual_detector(event, window_start, bin_duration, d) -> Optional[VirtualDetector]:
    """Map a click to ``(port, bin)``, or ``None`` outside the photon window.

    A timestamp exactly on a bin boundary belongs to the later bin.
    """
    k = math.floor((event.timestamp - window_start) / bin_duration)
    if 0 <= k < d:
        return VirtualDetector(event.detector, int(k))
    return None


def relative_times(events: EventStream, period, offset=0.0) -> np.ndarray:
    return events.timestamp - events.trial * float(period) - offset


def virtual_bins(events: EventStream, geometry: WindowGeometry) -> np.ndarray:
    """Bin index of every event, -1 where the click falls outside the photon."""
    rel = relative_times(events, geometry.period, geometry.offset)
    k = np.floor(rel / geometry.bin_duration).astype(np.int64)
    return np.where((k >= 0) & (k < geometry.d), k, -1)


def _split(events: EventStream, exclude_dark=False):
    if exclude_dark:
        events = events.photons_only()
    c = events.detector == 0
    return events, np.flatnonzero(c), np.flatnonzero(~c)


def _pairs(trial_c, trial_d, shift=0):
    """Index pairs (ic, id) with ``trial_d[id] == trial_c[ic] + shift``.

    ``trial_d`` must be sorted.
    """
    target = trial_c + shift
    lo = np.searchsorted(trial_d, target, side="left")
    hi = np.searchsorted(trial_d, target, side="right")
    n = hi - lo
    ic = np.repeat(np.arange(trial_c.size), n)
    offsets = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
    return ic, np.repeat(lo, n) + offsets


def _shift_list(n_shifts):
    return [k for k in range(-n_shifts, n_shifts + 1) if k != 0]


@dataclass
class CoincidenceHistogram:
    """C-D coincidences versus ``tau = t_C - t_D`` within trigger windows.

    ``counts`` is the raw 1 ns (by default) histogram.  After
    :func:`normalize_histogram`, ``normalization`` holds the mean number of
    uncorrelated photon pairs and ``density`` is in 1/ns.
    """

    tau: np.ndarray
    counts: np.ndarray
    tau_bin_width: float
    window_width: float
    n_trials: int
    n_coincidences: int
    pair_counts: Optional[np.ndarray] = None
    geometry: Optional[WindowGeometry] = None
    normalization: Optional[float] = None
    normalization_counts: int = 0
    reference_counts: Optional[np.ndarray] = None
    n_reference_shifts: int = 0

    @property
    def edges(self):
        return np.append(self.tau - 0.5 * self.tau_bin_width, self.tau[-1] + 0.5 * self.tau_bin_width)

    def _require_norm(self):
        if self.normalization is None:
            raise ValueError("histogram is not normalized; call normalize_histogram first")
        return self.normalization

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self._require_norm() * self.tau_bin_width)

    @property
    def density_sigma(self) -> np.ndarray:
        return np.sqrt(self.counts) / (self._require_norm() * self.tau_bin_width)

    @property
    def windowed_counts(self) -> np.ndarray:
        """Sum of counts in ``[tau - w/2, tau + w/2)`` around every point."""
        return sliding_sum(self.counts, self.window_width, self.tau_bin_width)

    @property
    def windowed_density(self) -> np.ndarray:
        return self.windowed_counts / (self._require_norm() * self.window_width)

    @property
    def reference_density(self) -> np.ndarray:
        """Cross-period coincidence density per shift, same units as ``density``."""
        if self.reference_counts is None:
            raise ValueError("no cross-period reference recorded")
        per_shift = self.reference_counts / self.n_reference_shifts
        return per_shift / (self._require_norm() * self.tau_bin_width)


def sliding_sum(counts, window_width, bin_width):
    n = max(1, int(round(window_width / bin_width)))
    lo_off = n // 2
    csum = np.concatenate([[0], np.cumsum(counts)])
    idx = np.arange(counts.size)
    lo = np.clip(idx - lo_off, 0, counts.size)
    hi = np.clip(idx - lo_off + n, 0, counts.size)
    return csum[hi] - csum[lo]


def _tau_axis(max_tau, width):
    nb = int(math.ceil(max_tau / width))
    edges = np.arange(-nb, nb + 1) * width
    return edges, 0.5 * (edges[:-1] + edges[1:])


def build_histogram(events: EventStream, max_tau=1000.0, tau_bin_width=1.0, window_width=60.0,
                    geometry: Optional[WindowGeometry] = None, exclude_dark=False) -> CoincidenceHistogram:
    """Histogram every same-window C-D pair by ``tau = t_C - t_D``.

    With a ``geometry`` the virtual-detector cell counts ``pair_counts[i, j]``
    (C in bin i, D in bin j) are recorded as well.
    """
    if not max_tau > 0 or not tau_bin_width > 0:
        raise ValueError("max_tau and tau_bin_width must be > 0")
    events, ic_all, id_all = _split(events, exclude_dark)
    ic, idd = _pairs(events.trial[ic_all], events.trial[id_all])
    ic, idd = ic_all[ic], id_all[idd]
    tau = events.timestamp[ic] - events.timestamp[idd]
    edges, centers = _tau_axis(max_tau, tau_bin_width)
    counts, _ = np.histogram(tau, bins=edges)
    pair_counts = None
    if geometry is not None:
        pair_counts = _cell_counts(events, geometry, ic, idd)
    return CoincidenceHistogram(
        tau=centers, counts=counts, tau_bin_width=float(tau_bin_width),
        window_width=float(window_width), n_trials=events.n_trials,
        n_coincidences=int(ic.size), pair_counts=pair_counts, geometry=geometry,
    )


def _cell_counts(events, geometry, ic, idd):
    d = geometry.d
    bins = virtual_bins(events, geometry)
    bc, bd = bins[ic], bins[idd]
    ok = (bc >= 0) & (bd >= 0)
    return np.bincount(bc[ok] * d + bd[ok], minlength=d * d).reshape(d, d)


def cross_period_reference(events: EventStream, n_shifts=DEFAULT_REFERENCE_SHIFTS, exclude_dark=False):
    """Mean number of uncorrelated C-D pairs per record, and the raw pair total.

    Averages ``sum_n nC[n] nD[n+k]`` over ``k = +-1..+-n_shifts``, each sum
    rescaled to the full number of windows.
    """
    events, ic_all, id_all = _split(events, exclude_dark)
    n = events.n_trials
    if n <= n_shifts:
        raise ValueError(f"record of {n} trigger windows is too short for {n_shifts} reference shifts")
    nc = np.bincount(events.trial[ic_all], minlength=n).astype(float)
    nd = np.bincount(events.trial[id_all], minlength=n).astype(float)
    raw = {k: np.dot(nc[:-k], nd[k:]) if k > 0 else np.dot(nc[-k:], nd[:k]) for k in _shift_list(n_shifts)}
    scaled = [s * n / (n - abs(k)) for k, s in raw.items()]
    return float(np.mean(scaled)), int(round(sum(raw.values())))


def normalize_histogram(hist: CoincidenceHistogram, events: EventStream, period,
                        n_shifts=DEFAULT_REFERENCE_SHIFTS, exclude_dark=False) -> CoincidenceHistogram:
    """Attach the cross-period normalization and reference histogram.

    Raises ``ValueError`` for an empty record or when no cross-period
    coincidences exist.
    """
    if len(events) == 0:
        raise ValueError("cannot normalize: event record is empty")
    norm, total = cross_period_reference(events, n_shifts, exclude_dark)
    if total == 0:
        raise ValueError("no cross-period reference coincidences; record too short")
    ev, ic_all, id_all = _split(events, exclude_dark)
    rel = relative_times(ev, period)
    edges = hist.edges
    ref = np.zeros(hist.counts.size, dtype=np.int64)
    for k in _shift_list(n_shifts):
        ic, idd = _pairs(ev.trial[ic_all], ev.trial[id_all], shift=k)
        tau = rel[ic_all[ic]] - rel[id_all[idd]]
        ref += np.histogram(tau, bins=edges)[0]
    hist.normalization = norm
    hist.normalization_counts = total
    hist.reference_counts = ref
    hist.n_reference_shifts = 2 * n_shifts
    return hist


def analyze(events: EventStream, geometry: WindowGeometry, max_tau=None, tau_bin_width=1.0,
            window_width=60.0, n_shifts=DEFAULT_REFERENCE_SHIFTS, exclude_dark=False) -> CoincidenceHistogram:
    """Build and normalize the histogram, recording virtual-detector cells."""
    max_tau = geometry.period if max_tau is None else max_tau
    hist = build_histogram(events, max_tau, tau_bin_width, window_width, geometry, exclude_dark)
    return normalize_histogram(hist, events, geometry.period, n_shifts, exclude_dark)


@dataclass
class RCPMatrix:
    """Relative coincidence probabilities between virtual detectors C_i and D_j."""

    d: int
    entries: np.ndarray
    sigma: np.ndarray
    counts_parallel: np.ndarray
    counts_perp: np.ndarray
    norm_parallel: float
    norm_perp: float
    norm_counts_parallel: int = 0
    norm_counts_perp: int = 0

    @property
    def defined(self) -> np.ndarray:
        return self.counts_perp > 0

    def pooled(self, cells) -> tuple:
        """RCP and sigma of the summed counts over ``cells`` (list of (i, j))."""
        cells = list(cells)
        cp = sum(int(self.counts_parallel[c]) for c in cells)
        cq = sum(int(self.counts_perp[c]) for c in cells)
        return _ratio(cp, cq, self.norm_parallel, self.norm_perp,
                      self.norm_counts_parallel, self.norm_counts_perp)

    def to_json(self) -> dict:
        def clean(a):
            return [[None if not np.isfinite(x) else float(x) for x in row] for row in a]

        return {
            "d": self.d,
            "rcp": clean(self.entries),
            "sigma": clean(self.sigma),
            "counts_parallel": self.counts_parallel.tolist(),
            "counts_perp": self.counts_perp.tolist(),
            "norm_parallel": self.norm_parallel,
            "norm_perp": self.norm_perp,
        }


def _ratio(cp, cq, np_, nq, ncp=0, ncq=0):
    """Ratio of normalized counts with Poisson error (zero counts count as one)."""
    if cq == 0:
        return math.nan, math.nan
    r = (cp / np_) / (cq / nq)
    rel2 = 1.0 / max(cp, 1) + 1.0 / cq
    if ncp:
        rel2 += 1.0 / ncp
    if ncq:
        rel2 += 1.0 / ncq
    scale = r if cp > 0 else (1.0 / np_) / (cq / nq)
    return r, scale * math.sqrt(rel2)


def rcp_from_histograms(hist_parallel: CoincidenceHistogram, hist_perp: CoincidenceHistogram) -> RCPMatrix:
    for h in (hist_parallel, hist_perp):
        if h.pair_counts is None or h.normalization is None:
            raise ValueError("histograms need virtual-detector counts and a normalization")
    cp, cq = hist_parallel.pair_counts, hist_perp.pair_counts
    if cp.shape != cq.shape:
        raise ValueError("parallel and perpendicular runs use different geometries")
    d = cp.shape[0]
    entries = np.full((d, d), np.nan)
    sigma = np.full((d, d), np.nan)
    for i in range(d):
        for j in range(d):
            entries[i, j], sigma[i, j] = _ratio(
                int(cp[i, j]), int(cq[i, j]), hist_parallel.normalization, hist_perp.normalization,
                hist_parallel.normalization_counts, hist_perp.normalization_counts,
            )
    if not np.all(cq > 0):
        warnings.warn("some RCP cells have no perpendicular reference counts and are undefined")
    return RCPMatrix(
        d, entries, sigma, cp.copy(), cq.copy(), hist_parallel.normalization, hist_perp.normalization,
        hist_parallel.normalization_counts, hist_perp.normalization_counts,
    )


def rcp_matrix(events_parallel: EventStream, events_perp: EventStream, geometry: WindowGeometry,
               n_shifts=DEFAULT_REFERENCE_SHIFTS, exclude_dark=False) -> RCPMatrix:
    """RCP between every pair of virtual detectors.

    Each run is scaled by its own cross-period normalization before the
    ratio.  Cells without perpendicular counts are NaN.
    """
    hp = analyze(events_parallel, geometry, n_shifts=n_shifts, exclude_dark=exclude_dark)
    hq = analyze(events_perp, geometry, n_shifts=n_shifts, exclude_dark=exclude_dark)
    return rcp_from_histograms(hp, hq)


@dataclass
class SidePeaks:
    """Satellite strengths at ``tau = separation * T`` (C bin minus D bin)."""

    separation: np.ndarray
    tau: np.ndarray
    strength: np.ndarray
    sigma: np.ndarray
    counts_parallel: np.ndarray

    def table(self, phase) -> list:
        """``(phi, strength, sigma)`` rows for :func:`chi2_model_test`."""
        return [(float(phase), float(r), float(s)) for r, s in zip(self.strength, self.sigma)]


def side_peak_strength(hist_parallel: CoincidenceHistogram, hist_perp: CoincidenceHistogram,
                       method="bins", bin_duration=None) -> SidePeaks:
    """Relative strength of every cross-correlation satellite.

    ``method="bins"`` (default) counts the coincidences whose clicks fall
    ``k`` time bins apart, using the virtual-detector cells; this is the exact
    satellite content even though neighbouring peaks overlap in ``tau``.
    ``method="window"`` integrates the histogram over ``[kT - T/2, kT + T/2]``
    instead; adjacent peaks leak into that window (about 5 % for sin² bins).
    """
    for h in (hist_parallel, hist_perp):
        if h.normalization is None:
            raise ValueError("histograms must be normalized")
    geom = hist_parallel.geometry or hist_perp.geometry
    if bin_duration is None:
        if geom is None:
            raise ValueError("bin_duration is required without a window geometry")
        bin_duration = geom.bin_duration
    if method == "bins":
        if hist_parallel.pair_counts is None or hist_perp.pair_counts is None:
            raise ValueError("method='bins' needs histograms built with a geometry")
        d = hist_parallel.pair_counts.shape[0]
        seps = np.array([k for k in range(-(d - 1), d) if k != 0], dtype=int)
        rows = []
        for k in seps:
            cells = [(i, i - k) for i in range(d) if 0 <= i - k < d]
            cp = sum(int(hist_parallel.pair_counts[c]) for c in cells)
            cq = sum(int(hist_perp.pair_counts[c]) for c in cells)
            if cq == 0:
                raise ValueError(f"zero reference counts in satellite {k}")
            r, s = _ratio(cp, cq, hist_parallel.normalization, hist_perp.normalization,
                          hist_parallel.normalization_counts, hist_perp.normalization_counts)
            rows.append((r, s, cp))
    elif method == "window":
        T = float(bin_duration)
        span = hist_parallel.tau[-1] + 0.5 * hist_parallel.tau_bin_width
        kmax = int(math.floor((span - 0.5 * T) / T))
        if geom is not None:
            kmax = min(kmax, geom.d - 1)
        seps = np.array([k for k in range(-kmax, kmax + 1) if k != 0], dtype=int)
        rows = []
        for k in seps:
            sel = (hist_parallel.tau >= k * T - T / 2) & (hist_parallel.tau < k * T + T / 2)
            cp = int(hist_parallel.counts[sel].sum())
            cq = int(hist_perp.counts[sel].sum())
            if cq == 0:
                raise ValueError(f"zero reference integral around tau = {k * T}")
            r, s = _ratio(cp, cq, hist_parallel.normalization, hist_perp.normalization,
                          hist_parallel.normalization_counts, hist_perp.normalization_counts)
            rows.append((r, s, cp))
    else:
        raise ValueError(f"unknown method {method!r}")
    r, s, c = (np.array(col) for col in zip(*rows))
    return SidePeaks(seps, seps * float(bin_duration), r, s, c)


def sin2_autocorrelation(tau, bin_duration):
    """Autocorrelation of one normalized sin² peak; integrates to 1 over ``|tau| < T``."""
    x = np.abs(np.asarray(tau, dtype=float)) / bin_duration
    val = (1 - x) * (1 + 0.5 * np.cos(2 * np.pi * x)) + 3 / (4 * np.pi) * np.sin(2 * np.pi * x)
    return np.where(x < 1, val / bin_duration, 0.0)


@dataclass
class PeakFit:
    separation: np.ndarray
    amplitude: np.ndarray
    sigma: np.ndarray
    background: float = 0.0


def fit_autocorrelation_peaks(hist: CoincidenceHistogram, bin_duration, d, background=False) -> PeakFit:
    """Least-squares fit of ``2d-1`` auto-correlated sin² peaks to the histogram.

    Amplitudes are the number of coincidences in each peak (divided by the
    normalization when the histogram has one).  Errors assume Poisson counts
    around the fitted model.
    """
    seps = np.arange(-(d - 1), d)
    cols = [sin2_autocorrelation(hist.tau - k * bin_duration, bin_duration) * hist.tau_bin_width
            for k in seps]
    if background:
        cols.append(np.full(hist.tau.size, hist.tau_bin_width))
    A = np.column_stack(cols)
    y = hist.counts.astype(float)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    model = np.clip(A @ coef, 0.0, None)
    pinv = np.linalg.pinv(A)
    cov = (pinv * model) @ pinv.T
    scale = hist.normalization or 1.0
    amps = coef[: seps.size] / scale
    sig = np.sqrt(np.diag(cov)[: seps.size]) / scale
    bg = coef[-1] / scale if background else 0.0
    return PeakFit(seps, amps, sig, bg)


def estimate_accidentals(events: EventStream, geometry: WindowGeometry, exclude_dark=False) -> np.ndarray:
    """Expected C-D coincidences per virtual-detector cell that involve a dark count.

    Dark rates come from clicks in the photon-free part of each window,
    ``[offset + d*T, period)``; photon singles per bin are the observed
    singles minus the dark expectation.
    """
    if exclude_dark:
        events = events.photons_only()
    n = events.n_trials
    if n == 0:
        raise ValueError("empty record")
    rel = relative_times(events, geometry.period, geometry.offset)
    quiet = geometry.period - geometry.offset - geometry.photon_duration
    if quiet <= 0:
        raise ValueError("no photon-free interval in the window to estimate dark rates")
    in_quiet = rel >= geometry.photon_duration
    bins = virtual_bins(events, geometry)
    T = geometry.bin_duration
    dark_per_bin, photons = [], []
    for code in (0, 1):
        mine = events.detector == code
        rate = np.count_nonzero(mine & in_quiet) / (n * quiet)
        per_bin = rate * T
        singles = np.bincount(bins[mine & (bins >= 0)], minlength=geometry.d).astype(float)
        dark_per_bin.append(per_bin)
        photons.append(np.clip(singles - n * per_bin, 0.0, None))
    dc, dd = dark_per_bin
    pc, pd = photons
    return pc[:, None] * dd + dc * pd[None, :] + n * dc * dd


@dataclass
class Chi2Result:
    statistic: float
    dof: int
    threshold: float
    p_value: float

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold

    def __iter__(self):
        yield self.statistic
        yield self.passed


def chi2_model_test(measured, model: Callable, confidence=0.95) -> Chi2Result:
    """Pearson chi² of ``(phi, strength, sigma)`` points against ``model(phi)``.

    Passes when the statistic is within the ``confidence`` quantile of the
    chi² distribution with one degree of freedom per point.
    """
    pts = np.asarray(list(measured), dtype=float)
    if pts.size == 0:
        raise ValueError("no measured points")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("measured points must be (phi, strength, sigma) triples")
    phi, val, sig = pts.T
    if np.any(~np.isfinite(sig)) or np.any(sig <= 0):
        raise ValueError("every sigma must be finite and > 0")
    expected = np.array([float(model(p)) for p in phi])
    chi2 = float(np.sum(((val - expected) / sig) ** 2))
    dof = phi.size
    return Chi2Result(chi2, dof, float(stats.chi2.ppf(confidence, dof)), float(stats.chi2.sf(chi2, dof)))
