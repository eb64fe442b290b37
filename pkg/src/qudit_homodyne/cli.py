"""Command-line entry point: ``qudit-homodyne {simulate,analyze,sweep-phase,tomo}``.

Exit codes: 0 success, 1 configuration or usage error, 2 analysis error.
Every output is computed in memory first and only written once the whole
command has succeeded, so a failing command leaves no partial files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import warnings

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .correlator import WindowGeometry, analyze, rcp_from_histograms, side_peak_strength
from .events import EventFormatError, EventStream, format_events_csv, read_events_csv
from .experiment import phase_sweep, simulate_pair
from .tomography import qudit_fidelity_pipeline

PARALLEL_FILE = "events_parallel.csv"
PERPENDICULAR_FILE = "events_perpendicular.csv"
HISTOGRAM_FILES = ("histogram_parallel.csv", "histogram_perpendicular.csv")
RCP_FILE = "rcp.json"
SIDE_PEAK_FILE = "side_peaks.csv"
SWEEP_FILE = "sweep.csv"
SWEEP_VERDICT_FILE = "sweep_chi2.json"
TOMOGRAPHY_FILE = "tomography.json"
FLOAT_FMT = ".12g"
DEFAULT_SWEEP = "0,pi/4,pi/2,3pi/4,pi,5pi/4,3pi/2,7pi/4,2pi"

_PHASE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*(pi)?\s*(?:/\s*(\d+\.?\d*))?$")


class AnalysisError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_phases(text) -> list:
    """Parse ``"0, pi/4, 1.5, 3pi/2"`` into radians."""
    phases = []
    for item in str(text).split(","):
        item = item.strip().lower()
        if not item:
            continue
        m = _PHASE_RE.match(item)
        if m is None or (m.group(1) in ("", "+", "-") and not m.group(2)):
            raise ConfigError([f"--phases: cannot parse {item!r}"])
        coef = m.group(1)
        value = float(coef + "1" if coef in ("", "+", "-") else coef)
        if m.group(2):
            value *= math.pi
        if m.group(3):
            den = float(m.group(3))
            if den == 0:
                raise ConfigError([f"--phases: division by zero in {item!r}"])
            value /= den
        phases.append(value)
    if not phases:
        raise ConfigError(["--phases: empty phase list"])
    return phases


def _fmt(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else format(x, FLOAT_FMT)


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    meta = {"tool": "qudit-homodyne", "version": __version__, "config_hash": cfg.config_hash(), "seed": cfg.seed}
    meta.update(extra)
    return meta


def _header(meta) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def _csv(meta, columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return _header(meta) + "\n".join(lines) + "\n"


def _json(meta, payload) -> str:
    return json.dumps({"meta": meta, **payload}, indent=2) + "\n"


def _write_outputs(directory, files: dict):
    """Write ``{name: text}`` via temporary files and atomic renames."""
    os.makedirs(directory, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"output directory {directory} is not writable")
    staged = []
    try:
        for name, text in files.items():
            tmp = os.path.join(directory, f".{name}.tmp")
            with open(tmp, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(directory, name)))
    except OSError:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError([f"--seed: must be an unsigned 64-bit integer, got {args.seed}"])
    return cfg.with_overrides(seed=args.seed, output_dir=args.out, kernel=getattr(args, "kernel", None))


def _geometry(cfg: ExperimentConfig) -> WindowGeometry:
    return WindowGeometry(cfg.signal.d, cfg.signal.bin_duration, cfg.source.repetition_period)


def _event_paths(args, cfg):
    if not args.events:
        return (os.path.join(cfg.output_dir, PARALLEL_FILE), os.path.join(cfg.output_dir, PERPENDICULAR_FILE))
    if len(args.events) != 2:
        raise ConfigError([f"expected two event files (parallel, perpendicular), got {len(args.events)}"])
    return tuple(args.events)


def _read_events(path) -> EventStream:
    if not os.path.exists(path):
        raise EventFormatError("file not found", path)
    return read_events_csv(path)


def _histogram_rows(h):
    return zip(h.tau, h.density, h.windowed_density)


def _satellite_phases(signal, separations):
    """Circular-mean phase difference between bins ``k`` apart for each satellite."""
    ph = signal.phases
    out = []
    for k in separations:
        diffs = [ph[i] - ph[i - k] for i in range(signal.d) if 0 <= i - k < signal.d]
        out.append(float(np.angle(np.mean(np.exp(1j * np.array(diffs)))) % (2 * math.pi)))
    return out


def _summary(name, ev: EventStream):
    n = max(ev.n_trials, 1)
    counts = [int(np.sum(ev.detector == i)) for i in (0, 1)]
    return (f"{name}: {ev.n_trials} trigger windows, clicks C={counts[0]} D={counts[1]} "
            f"({counts[0] / n:.4f}, {counts[1] / n:.4f} per window), dark {int(ev.dark.sum())}")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    par, perp = simulate_pair(cfg.signal, cfg.lo, cfg.interference, cfg.source.replace(rng_seed=cfg.seed))
    files = {}
    for name, pol, ev in ((PARALLEL_FILE, "parallel", par), (PERPENDICULAR_FILE, "perpendicular", perp)):
        files[name] = format_events_csv(ev, _meta(cfg, polarization=pol, n_trials=ev.n_trials))
    _write_outputs(cfg.output_dir, files)
    print(_summary("parallel", par))
    print(_summary("perpendicular", perp))
    print(f"wrote {', '.join(os.path.join(cfg.output_dir, f) for f in files)}")
    return 0


def _analysis(cfg, par, perp):
    a = cfg.analysis
    geometry = _geometry(cfg)
    try:
        hp = analyze(par, geometry, a.max_tau, a.tau_bin_width, a.window_width, a.reference_shifts, a.exclude_dark)
        hq = analyze(perp, geometry, a.max_tau, a.tau_bin_width, a.window_width, a.reference_shifts, a.exclude_dark)
        rcp = rcp_from_histograms(hp, hq)
        peaks = side_peak_strength(hp, hq, a.side_peak_method)
    except ValueError as exc:
        raise AnalysisError(str(exc))
    return hp, hq, rcp, peaks


def cmd_analyze(args) -> int:
    cfg = _load(args)
    p_path, q_path = _event_paths(args, cfg)
    par, perp = _read_events(p_path), _read_events(q_path)
    hp, hq, rcp, peaks = _analysis(cfg, par, perp)
    meta = _meta(cfg, parallel=p_path, perpendicular=q_path)
    cols = ("tau_ns", "density", "windowed_density")
    files = {
        HISTOGRAM_FILES[0]: _csv({**meta, "polarization": "parallel"}, cols, _histogram_rows(hp)),
        HISTOGRAM_FILES[1]: _csv({**meta, "polarization": "perpendicular"}, cols, _histogram_rows(hq)),
        RCP_FILE: _json(meta, rcp.to_json()),
        SIDE_PEAK_FILE: _csv(
            {**meta, "separations": " ".join(str(int(k)) for k in peaks.separation)},
            ("phi_rad", "strength", "sigma"),
            zip(_satellite_phases(cfg.signal, peaks.separation), peaks.strength, peaks.sigma),
        ),
    }
    _write_outputs(cfg.output_dir, files)
    for k, r, s in zip(peaks.separation, peaks.strength, peaks.sigma):
        print(f"satellite {int(k):+d}: strength {r:.4f} +- {s:.4f}")
    print(f"wrote {', '.join(files)} to {cfg.output_dir}")
    return 0


def cmd_sweep_phase(args) -> int:
    cfg = _load(args)
    phases = parse_phases(args.phases if args.phases is not None else DEFAULT_SWEEP)
    try:
        result = phase_sweep(phases, cfg.interference, cfg.source.replace(rng_seed=cfg.seed), cfg.signal.d,
                             cfg.signal.bin_duration, confidence=cfg.analysis.confidence)
    except ValueError as exc:
        raise AnalysisError(str(exc))
    meta = _meta(cfg)
    chi2 = result.chi2
    verdict = {
        "statistic": chi2.statistic, "dof": chi2.dof, "threshold": chi2.threshold, "p_value": chi2.p_value,
        "confidence": cfg.analysis.confidence, "passed": chi2.passed,
        "accidental_fraction": result.accidental_fraction,
    }
    rows = [(p.phase, p.strength, p.sigma, p.model, p.separation) for p in result.points]
    files = {
        SWEEP_FILE: _csv(meta, ("phi_rad", "strength", "sigma", "model", "separation"), rows),
        SWEEP_VERDICT_FILE: _json(meta, verdict),
    }
    _write_outputs(cfg.output_dir, files)
    for p in result.points:
        print(f"phi={p.phase:.4f} k={p.separation:+d}: {p.strength:.4f} +- {p.sigma:.4f} (model {p.model:.4f})")
    print(f"chi2 = {chi2.statistic:.2f} / {chi2.dof} dof, threshold {chi2.threshold:.2f}: "
          f"{'PASS' if chi2.passed else 'FAIL'}")
    return 0


def cmd_tomography(args) -> int:
    cfg = _load(args)
    p_path, q_path = _event_paths(args, cfg)
    par, perp = _read_events(p_path), _read_events(q_path)
    a = cfg.analysis
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = qudit_fidelity_pipeline(par, perp, cfg.signal, _geometry(cfg), a.combine, a.project_psd,
                                             a.n_bootstrap, cfg.seed, a.reference_shifts)
        except ValueError as exc:
            raise AnalysisError(str(exc))
    report = result.report()
    report["warnings"] = [str(w.message) for w in caught]
    _write_outputs(cfg.output_dir, {TOMOGRAPHY_FILE: _json(_meta(cfg, parallel=p_path, perpendicular=q_path),
                                                           report)})
    print(f"fidelity {report['fidelity']:.4f} +- {report['std_error']:.4f} "
          f"from {report['n_correlations']} correlations")
    print(f"wrote {os.path.join(cfg.output_dir, TOMOGRAPHY_FILE)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qudit-homodyne", description="Time-bin qudit homodyne simulation and analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--kernel", choices=("gaussian", "exponential"), help="coherence kernel")

    p = sub.add_parser("simulate", help="simulate parallel and perpendicular runs")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("analyze", help="histograms, RCP matrix and side peaks")
    common(p)
    p.add_argument("events", nargs="*", help="parallel and perpendicular event files")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("sweep-phase", help="side-peak strength versus signal phase")
    common(p)
    p.add_argument("--phases", help=f"comma-separated phases in radians, e.g. {DEFAULT_SWEEP!r}")
    p.set_defaults(func=cmd_sweep_phase)
    p = sub.add_parser("tomo", help="density matrix and fidelity of the configured signal")
    common(p)
    p.add_argument("events", nargs="*", help="parallel and perpendicular event files")
    p.set_defaults(func=cmd_tomography)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EventFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
