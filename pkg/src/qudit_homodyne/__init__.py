"""Simulation and analysis of time-bin qudit homodyne measurements."""

__version__ = "0.1.0"

from .correlator import (
    CoincidenceHistogram,
    RCPMatrix,
    SidePeaks,
    WindowGeometry,
    analyze,
    chi2_model_test,
    rcp_matrix,
    side_peak_strength,
)
from .estimators import CoincidenceAnalyzer, HomodyneTomography, VirtualDetectorMapper
from .events import DetectionEvent, EventFormatError, EventStream, read_events_csv, write_events_csv
from .experiment import calibrate_imperfections, phase_sweep, simulate_pair
from .mc_sim import SourceConfig, simulate_stream
from .optics import (
    CoherenceKernel,
    InterferenceSettings,
    Polarization,
    cross_bin_rcp_analytic,
    expected_side_peak_strength,
    joint_coincidence_density,
    two_photon_output_expansion,
)
from .qudit_state import TimeBinQudit, equal_qudit, local_oscillator, make_qudit
from .tomography import DensityMatrixEstimate, fidelity, qudit_fidelity_pipeline, reconstruct_density_matrix

__all__ = [
    "CoherenceKernel", "CoincidenceAnalyzer", "CoincidenceHistogram", "DensityMatrixEstimate", "DetectionEvent",
    "EventFormatError", "EventStream", "HomodyneTomography", "InterferenceSettings", "Polarization", "RCPMatrix",
    "SidePeaks", "SourceConfig", "TimeBinQudit", "VirtualDetectorMapper", "WindowGeometry", "analyze",
    "calibrate_imperfections", "chi2_model_test", "cross_bin_rcp_analytic", "equal_qudit",
    "expected_side_peak_strength", "fidelity", "joint_coincidence_density", "local_oscillator", "make_qudit",
    "phase_sweep", "qudit_fidelity_pipeline", "rcp_matrix", "read_events_csv", "reconstruct_density_matrix",
    "side_peak_strength", "simulate_pair", "simulate_stream", "two_photon_output_expansion", "write_events_csv",
]
