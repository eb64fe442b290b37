"""Experiment configuration files.

A configuration is a YAML mapping with the sections ``signal``, ``lo``,
``interference``, ``source``, ``analysis`` and ``output`` plus a top-level
``seed``.  Every key is optional; defaults mirror the apparatus (230 ns
bins, 1 us trigger period, 500 ns coherence time, 85 % emission
efficiency).  :func:`load_config` collects every problem it finds before
raising, so a bad file is reported in one go.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .mc_sim import SourceConfig
from .optics import CoherenceKernel, InterferenceSettings, Polarization
from .qudit_state import TimeBinQudit, local_oscillator, qudit_from_literal

SIDE_PEAK_METHODS = ("bins", "window")
COMBINE_MODES = ("mean", "max")

_SECTIONS = {
    "signal": None,
    "lo": None,
    "interference": {"coherence_time_ns", "kernel", "mode_overlap"},
    "source": {"repetition_period_ns", "emission_efficiency", "detection_efficiency", "dark_count_rate_per_ns",
               "n_trigger_pairs", "number_resolving", "dead_time_ns"},
    "analysis": {"max_tau_ns", "tau_bin_width_ns", "window_width_ns", "reference_shifts", "side_peak_method",
                 "combine", "exclude_dark", "project_psd", "n_bootstrap", "confidence"},
    "output": {"directory"},
    "seed": None,
}

DEFAULT_SIGNAL = {"d": 2, "magnitudes": [1.0, 1.0], "phases_deg": [0.0, 180.0], "bin_ns": 230.0}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class AnalysisConfig:
    max_tau: Optional[float] = None  # None -> one trigger period
    tau_bin_width: float = 1.0
    window_width: float = 60.0
    reference_shifts: int = 5
    side_peak_method: str = "bins"
    combine: str = "mean"
    exclude_dark: bool = False
    project_psd: bool = False
    n_bootstrap: int = 0
    confidence: float = 0.95


@dataclass
class ExperimentConfig:
    signal: TimeBinQudit
    lo: TimeBinQudit
    interference: InterferenceSettings
    source: SourceConfig
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "out"
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, seed=None, output_dir=None, kernel=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if output_dir is not None:
            raw.setdefault("output", {})["directory"] = str(output_dir)
        if kernel is not None:
            raw.setdefault("interference", {})["kernel"] = kernel
        return config_from_dict(raw)

    def config_hash(self) -> str:
        """SHA-256 of the resolved configuration, stable across key order."""
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def resolved(self) -> dict:
        s, a = self.source, self.analysis
        tau_c = self.interference.coherence_time
        return {
            "signal": self.signal.to_literal(),
            "lo": self.lo.to_literal(),
            "interference": {
                "coherence_time_ns": "inf" if math.isinf(tau_c) else tau_c,
                "kernel": self.interference.coherence_kernel.value,
                "mode_overlap": self.interference.mode_overlap,
            },
            "source": {
                "repetition_period_ns": s.repetition_period, "emission_efficiency": s.emission_efficiency,
                "detection_efficiency": s.detection_efficiency, "dark_count_rate_per_ns": s.dark_count_rate,
                "n_trigger_pairs": s.n_trigger_pairs, "number_resolving": s.number_resolving,
                "dead_time_ns": s.dead_time,
            },
            "analysis": {
                "max_tau_ns": a.max_tau, "tau_bin_width_ns": a.tau_bin_width, "window_width_ns": a.window_width,
                "reference_shifts": a.reference_shifts, "side_peak_method": a.side_peak_method,
                "combine": a.combine, "exclude_dark": a.exclude_dark, "project_psd": a.project_psd,
                "n_bootstrap": a.n_bootstrap, "confidence": a.confidence,
            },
            "seed": self.seed,
        }


def _number(section, key, value, problems, lo=None, hi=None, lo_open=False, allow_inf=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if allow_inf and isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
            return math.inf
        problems.append(f"{section}.{key}: expected a number, got {value!r}")
        return None
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        problems.append(f"{section}.{key}: must be finite, got {value}")
        return None
    if lo is not None and (value <= lo if lo_open else value < lo):
        problems.append(f"{section}.{key}: must be {'>' if lo_open else '>='} {lo}, got {value}")
        return None
    if hi is not None and value > hi:
        problems.append(f"{section}.{key}: must be <= {hi}, got {value}")
        return None
    return value


def _integer(section, key, value, problems, lo=0):
    if isinstance(value, bool) or not isinstance(value, int):
        problems.append(f"{section}.{key}: expected an integer, got {value!r}")
        return None
    if value < lo:
        problems.append(f"{section}.{key}: must be >= {lo}, got {value}")
        return None
    return value


def _flag(section, key, value, problems):
    if not isinstance(value, bool):
        problems.append(f"{section}.{key}: expected true/false, got {value!r}")
        return None
    return value


def _choice(section, key, value, options, problems):
    if value not in options:
        problems.append(f"{section}.{key}: expected one of {', '.join(options)}, got {value!r}")
        return None
    return value


def _state(name, literal, problems):
    if not isinstance(literal, dict):
        problems.append(f"{name}: expected a mapping, got {type(literal).__name__}")
        return None
    try:
        return qudit_from_literal(literal)
    except (ValueError, TypeError) as exc:
        problems.append(f"{name}: {exc}")
        return None


def config_from_dict(raw) -> ExperimentConfig:
    problems = []
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"top level: expected a mapping, got {type(raw).__name__}"])
    for key in raw:
        if key not in _SECTIONS:
            problems.append(f"unknown section {key!r}")
    for sec, keys in _SECTIONS.items():
        if keys is None or sec not in raw:
            continue
        if not isinstance(raw[sec], dict):
            problems.append(f"{sec}: expected a mapping, got {type(raw[sec]).__name__}")
            continue
        for key in raw[sec]:
            if key not in keys:
                problems.append(f"{sec}: unknown key {key!r}")

    def section(name):
        val = raw.get(name, {})
        return val if isinstance(val, dict) else {}

    signal = _state("signal", raw.get("signal", DEFAULT_SIGNAL), problems)
    lo = None
    if "lo" in raw:
        lo = _state("lo", raw["lo"], problems)
    elif signal is not None:
        lo = local_oscillator(signal.d, signal.bin_duration)
    if signal is not None and lo is not None:
        if lo.d != signal.d:
            problems.append(f"lo: dimension {lo.d} differs from signal dimension {signal.d}")
        if lo.bin_duration != signal.bin_duration:
            problems.append(f"lo: bin_ns {lo.bin_duration} differs from signal bin_ns {signal.bin_duration}")

    sec = section("interference")
    tau_c = _number("interference", "coherence_time_ns", sec.get("coherence_time_ns", 500.0), problems,
                    lo=0, lo_open=True, allow_inf=True)
    kernel = _choice("interference", "kernel", sec.get("kernel", "gaussian"),
                     [k.value for k in CoherenceKernel], problems)
    mu = _number("interference", "mode_overlap", sec.get("mode_overlap", 1.0), problems, lo=0, hi=1)

    sec = section("source")
    d0 = SourceConfig()
    period = _number("source", "repetition_period_ns", sec.get("repetition_period_ns", d0.repetition_period),
                     problems, lo=0, lo_open=True)
    eta_e = _number("source", "emission_efficiency", sec.get("emission_efficiency", d0.emission_efficiency),
                    problems, lo=0, hi=1, lo_open=True)
    eta_d = _number("source", "detection_efficiency", sec.get("detection_efficiency", d0.detection_efficiency),
                    problems, lo=0, hi=1)
    dark = _number("source", "dark_count_rate_per_ns", sec.get("dark_count_rate_per_ns", d0.dark_count_rate),
                   problems, lo=0)
    n_pairs = _integer("source", "n_trigger_pairs", sec.get("n_trigger_pairs", d0.n_trigger_pairs), problems)
    resolving = _flag("source", "number_resolving", sec.get("number_resolving", False), problems)
    dead = _number("source", "dead_time_ns", sec.get("dead_time_ns", 0.0), problems, lo=0)
    seed = _integer("seed", "value", raw.get("seed", 0), problems)
    if seed is not None and seed >= 2**64:
        problems.append(f"seed: must fit in 64 bits, got {seed}")
        seed = None
    if signal is not None and period is not None and signal.total_duration > period:
        problems.append(f"source.repetition_period_ns: {period} is shorter than the photon "
                        f"({signal.total_duration} ns)")

    sec = section("analysis")
    a0 = AnalysisConfig()
    max_tau = sec.get("max_tau_ns")
    if max_tau is not None:
        max_tau = _number("analysis", "max_tau_ns", max_tau, problems, lo=0, lo_open=True)
    analysis = AnalysisConfig(
        max_tau=max_tau,
        tau_bin_width=_number("analysis", "tau_bin_width_ns", sec.get("tau_bin_width_ns", a0.tau_bin_width),
                              problems, lo=0, lo_open=True),
        window_width=_number("analysis", "window_width_ns", sec.get("window_width_ns", a0.window_width),
                             problems, lo=0, lo_open=True),
        reference_shifts=_integer("analysis", "reference_shifts", sec.get("reference_shifts", a0.reference_shifts),
                                  problems, lo=1),
        side_peak_method=_choice("analysis", "side_peak_method", sec.get("side_peak_method", a0.side_peak_method),
                                 SIDE_PEAK_METHODS, problems),
        combine=_choice("analysis", "combine", sec.get("combine", a0.combine), COMBINE_MODES, problems),
        exclude_dark=_flag("analysis", "exclude_dark", sec.get("exclude_dark", False), problems),
        project_psd=_flag("analysis", "project_psd", sec.get("project_psd", False), problems),
        n_bootstrap=_integer("analysis", "n_bootstrap", sec.get("n_bootstrap", 0), problems),
        confidence=_number("analysis", "confidence", sec.get("confidence", a0.confidence), problems,
                           lo=0, hi=1, lo_open=True),
    )
    out = section("output").get("directory", "out")
    if not isinstance(out, str) or not out:
        problems.append(f"output.directory: expected a non-empty string, got {out!r}")

    if problems:
        raise ConfigError(problems)
    settings = InterferenceSettings(Polarization.PARALLEL, tau_c, CoherenceKernel(kernel), mu)
    source = SourceConfig(period, eta_e, eta_d, dark, n_pairs, seed, resolving, dead)
    return ExperimentConfig(signal, lo, settings, source, analysis, out, seed, raw)


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror or exc}"])
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"])
    return config_from_dict(raw)
