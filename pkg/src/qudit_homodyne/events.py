"""Time-tagged detection events and the event CSV format.

The CSV contract is::

    # optional metadata comment lines
    trial,detector,timestamp_ns,origin
    0,C,123.456,photon

Timestamps are written with three decimals.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

DETECTORS = ("C", "D")
ORIGINS = ("photon", "dark")
CSV_HEADER = ("trial", "detector", "timestamp_ns", "origin")


class EventFormatError(ValueError):
    """An event file violates the CSV contract."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class DetectionEvent:
    detector: str
    timestamp: float
    trial_index: int
    origin: str = "photon"

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        if not self.timestamp >= 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if self.trial_index < 0:
            raise ValueError(f"trial_index must be >= 0, got {self.trial_index}")


class EventStream:
    """Columnar, read-only store of detection events sorted by time.

    Iterating yields :class:`DetectionEvent` objects; the analysis code works
    on the arrays directly.  ``detector`` is 0 for C and 1 for D, ``dark`` is
    True for dark counts.
    """

    __slots__ = ("trial", "detector", "timestamp", "dark", "n_trials")

    def __init__(self, trial, detector, timestamp, dark=None, n_trials=None, presorted=False):
        trial = np.asarray(trial, dtype=np.int64).ravel()
        detector = np.asarray(detector, dtype=np.int8).ravel()
        timestamp = np.asarray(timestamp, dtype=float).ravel()
        dark = np.zeros(trial.size, bool) if dark is None else np.asarray(dark, bool).ravel()
        if not (trial.size == detector.size == timestamp.size == dark.size):
            raise ValueError("event columns have different lengths")
        if trial.size and (np.any(timestamp < 0) or not np.all(np.isfinite(timestamp))):
            raise ValueError("timestamps must be finite and >= 0")
        if trial.size and np.any((detector != 0) & (detector != 1)):
            raise ValueError("detector codes must be 0 (C) or 1 (D)")
        if not presorted:
            order = np.lexsort((detector, timestamp))
            trial, detector, timestamp, dark = trial[order], detector[order], timestamp[order], dark[order]
        for a in (trial, detector, timestamp, dark):
            a.setflags(write=False)
        self.trial, self.detector, self.timestamp, self.dark = trial, detector, timestamp, dark
        if n_trials is None:
            n_trials = int(trial.max()) + 1 if trial.size else 0
        self.n_trials = int(n_trials)

    @classmethod
    def empty(cls, n_trials=0):
        return cls([], [], [], [], n_trials=n_trials)

    @classmethod
    def from_events(cls, events: Iterable[DetectionEvent], n_trials=None):
        events = list(events)
        return cls(
            [e.trial_index for e in events],
            [DETECTORS.index(e.detector) for e in events],
            [e.timestamp for e in events],
            [e.origin == "dark" for e in events],
            n_trials=n_trials,
        )

    def __len__(self):
        return self.trial.size

    def __iter__(self) -> Iterator[DetectionEvent]:
        for tr, det, ts, dk in zip(self.trial, self.detector, self.timestamp, self.dark):
            yield DetectionEvent(DETECTORS[det], float(ts), int(tr), "dark" if dk else "photon")

    def __getitem__(self, i) -> DetectionEvent:
        return DetectionEvent(
            DETECTORS[self.detector[i]], float(self.timestamp[i]), int(self.trial[i]),
            "dark" if self.dark[i] else "photon",
        )

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.n_trials == other.n_trials
            and np.array_equal(self.trial, other.trial)
            and np.array_equal(self.detector, other.detector)
            and np.array_equal(self.timestamp, other.timestamp)
            and np.array_equal(self.dark, other.dark)
        )

    def __repr__(self):
        return f"EventStream({len(self)} events, {self.n_trials} trials)"

    def select(self, mask) -> "EventStream":
        mask = np.asarray(mask, bool)
        return EventStream(
            self.trial[mask], self.detector[mask], self.timestamp[mask], self.dark[mask],
            n_trials=self.n_trials, presorted=True,
        )

    def photons_only(self) -> "EventStream":
        return self.select(~self.dark)

    def take_trials(self, trials, period) -> "EventStream":
        """Events of the given trigger windows, renumbered ``0..len(trials)-1``.

        Windows may repeat, which is what the trigger-window bootstrap needs.
        Timestamps move with their window so that ``timestamp - trial*period``
        is preserved.
        """
        trials = np.asarray(trials, dtype=np.int64)
        grid = np.arange(self.n_trials + 1)
        bounds = np.searchsorted(self.trial, grid, side="left")
        starts, counts = bounds[trials], bounds[trials + 1] - bounds[trials]
        new_trial = np.repeat(np.arange(trials.size), counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        idx = np.repeat(starts, counts) + offsets
        shifted = self.timestamp[idx] + (new_trial - self.trial[idx]) * float(period)
        return EventStream(
            new_trial, self.detector[idx], shifted, self.dark[idx], n_trials=trials.size,
        )


def format_events_csv(events: EventStream, metadata=None) -> str:
    """Event file contents; ``metadata`` items become ``# key: value`` comment lines."""
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {value}\n")
    buf.write(",".join(CSV_HEADER) + "\n")
    det = np.array(DETECTORS)[events.detector]
    org = np.where(events.dark, "dark", "photon")
    for tr, d, ts, o in zip(events.trial.tolist(), det.tolist(), events.timestamp.tolist(), org.tolist()):
        buf.write(f"{tr},{d},{ts:.3f},{o}\n")
    return buf.getvalue()


def write_events_csv(events: EventStream, path, metadata=None):
    with open(path, "w", newline="") as fh:
        fh.write(format_events_csv(events, metadata))


def read_events_csv(path, n_trials=None) -> EventStream:
    """Parse an event file, raising :class:`EventFormatError` with line numbers.

    The number of trigger windows is read from an ``# n_trials:`` metadata
    line when present, otherwise taken from the largest trial index.
    """
    trials, dets, times, dark = [], [], [], []
    meta_trials = None
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "n_trials":
                    try:
                        meta_trials = int(value.strip())
                    except ValueError:
                        raise EventFormatError(f"bad n_trials metadata {value.strip()!r}", path, lineno)
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if tuple(f.strip() for f in fields) != CSV_HEADER:
                    raise EventFormatError(
                        f"expected header {','.join(CSV_HEADER)!r}, got {line!r}", path, lineno
                    )
                header_seen = True
                continue
            if len(fields) != 4:
                raise EventFormatError(f"expected 4 fields, got {len(fields)}", path, lineno)
            tr, det, ts, origin = (f.strip() for f in fields)
            try:
                tr = int(tr)
            except ValueError:
                raise EventFormatError(f"trial is not an integer: {tr!r}", path, lineno)
            if tr < 0:
                raise EventFormatError(f"negative trial index {tr}", path, lineno)
            if det not in DETECTORS:
                raise EventFormatError(f"unknown detector {det!r}", path, lineno)
            try:
                ts = float(ts)
            except ValueError:
                raise EventFormatError(f"timestamp is not a number: {ts!r}", path, lineno)
            if not (np.isfinite(ts) and ts >= 0):
                raise EventFormatError(f"timestamp must be finite and >= 0, got {ts}", path, lineno)
            if origin not in ORIGINS:
                raise EventFormatError(f"unknown origin {origin!r}", path, lineno)
            trials.append(tr)
            dets.append(DETECTORS.index(det))
            times.append(ts)
            dark.append(origin == "dark")
    if not header_seen:
        raise EventFormatError("missing CSV header", path)
    if n_trials is None:
        n_trials = meta_trials
    if n_trials is not None and trials and max(trials) >= n_trials:
        raise EventFormatError(f"trial index {max(trials)} exceeds n_trials={n_trials}", path)
    return EventStream(trials, dets, times, dark, n_trials=n_trials)


def ensure_writable_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
