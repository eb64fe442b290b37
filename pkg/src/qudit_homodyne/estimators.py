"""scikit-learn style wrappers around the analysis chain.

The estimators take event records as ``X`` (and the perpendicular reference
record as ``y`` for tomography), learn their results in ``fit`` and expose
them as trailing-underscore attributes, so they work with ``get_params``,
``clone`` and friends.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .correlator import WindowGeometry, analyze, side_peak_strength, virtual_bins
from .qudit_state import equal_qudit
from .tomography import qudit_fidelity_pipeline
from .validation import check_events, check_phases, check_positive


class VirtualDetectorMapper(TransformerMixin, BaseEstimator):
    """Map clicks to virtual detectors.

    ``transform`` returns an ``(n_events, 2)`` integer array of
    ``(port, bin)`` with port 0 = C, 1 = D and bin -1 outside the photon.
    """

    def __init__(self, d=2, bin_duration=230.0, period=1000.0, offset=0.0):
        self.d = d
        self.bin_duration = bin_duration
        self.period = period
        self.offset = offset

    def fit(self, X, y=None):
        check_events(X)
        self.geometry_ = WindowGeometry(int(self.d), check_positive(self.bin_duration, "bin_duration"),
                                        check_positive(self.period, "period"), float(self.offset))
        return self

    def transform(self, X):
        check_is_fitted(self, "geometry_")
        ev = check_events(X)
        return np.column_stack([ev.detector.astype(np.int64), virtual_bins(ev, self.geometry_)])


class CoincidenceAnalyzer(BaseEstimator):
    """Normalized coincidence histogram of one polarization run.

    Attributes after ``fit``: ``histogram_``, ``normalization_`` and
    ``pair_counts_`` (virtual-detector cells).
    """

    def __init__(self, d=2, bin_duration=230.0, period=1000.0, max_tau=None, tau_bin_width=1.0,
                 window_width=60.0, n_shifts=5, exclude_dark=False):
        self.d = d
        self.bin_duration = bin_duration
        self.period = period
        self.max_tau = max_tau
        self.tau_bin_width = tau_bin_width
        self.window_width = window_width
        self.n_shifts = n_shifts
        self.exclude_dark = exclude_dark

    def fit(self, X, y=None):
        ev = check_events(X)
        geometry = WindowGeometry(int(self.d), check_positive(self.bin_duration, "bin_duration"),
                                  check_positive(self.period, "period"))
        self.histogram_ = analyze(ev, geometry, self.max_tau, self.tau_bin_width, self.window_width,
                                  int(self.n_shifts), self.exclude_dark)
        self.normalization_ = self.histogram_.normalization
        self.pair_counts_ = self.histogram_.pair_counts
        return self

    def transform(self, X=None):
        """``(tau, density, windowed_density)`` columns of the fitted histogram."""
        check_is_fitted(self, "histogram_")
        h = self.histogram_
        return np.column_stack([h.tau, h.density, h.windowed_density])

    def side_peaks(self, reference: "CoincidenceAnalyzer", method="bins"):
        """Satellite strengths of this run relative to a fitted reference run."""
        check_is_fitted(self, "histogram_")
        check_is_fitted(reference, "histogram_")
        return side_peak_strength(self.histogram_, reference.histogram_, method)


class HomodyneTomography(BaseEstimator):
    """Partial density-matrix reconstruction from a homodyne measurement.

    ``fit(X, y)`` takes the parallel-polarization record ``X`` and the
    perpendicular reference ``y``.  ``target_phases`` fixes the prepared
    equal-weight state whose phases orient the off-diagonal elements.
    """

    def __init__(self, target_phases=(0.0, np.pi), bin_duration=230.0, period=1000.0, combine="mean",
                 project_psd=False, n_bootstrap=0, n_shifts=5, random_state=None):
        self.target_phases = target_phases
        self.bin_duration = bin_duration
        self.period = period
        self.combine = combine
        self.project_psd = project_psd
        self.n_bootstrap = n_bootstrap
        self.n_shifts = n_shifts
        self.random_state = random_state

    def _target(self):
        phases = check_phases(self.target_phases, name="target_phases")
        return equal_qudit(phases, check_positive(self.bin_duration, "bin_duration"))

    def fit(self, X, y):
        par = check_events(X, "parallel events")
        perp = check_events(y, "perpendicular events")
        target = self._target()
        geometry = WindowGeometry(target.d, target.bin_duration, check_positive(self.period, "period"))
        result = qudit_fidelity_pipeline(par, perp, target, geometry, self.combine, self.project_psd,
                                         int(self.n_bootstrap), self.random_state, int(self.n_shifts))
        self.result_ = result
        self.rcp_ = result.rcp
        self.density_matrix_ = result.density.matrix
        self.fidelity_ = result.fidelity.fidelity
        self.std_error_ = result.fidelity.std_error
        return self

    def score(self, X, y):
        """Fidelity of the state reconstructed from ``(X, y)`` with the target."""
        check_is_fitted(self, "result_")
        par, perp = check_events(X), check_events(y)
        target = self._target()
        geometry = WindowGeometry(target.d, target.bin_duration, float(self.period))
        return qudit_fidelity_pipeline(par, perp, target, geometry, self.combine, self.project_psd,
                                       n_shifts=int(self.n_shifts)).fidelity.fidelity
