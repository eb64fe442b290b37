"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import os

import numpy as np

from .events import DetectionEvent, EventStream, read_events_csv


def check_events(X, name="events") -> EventStream:
    """Coerce ``X`` into an :class:`EventStream`.

    Accepts an ``EventStream``, an iterable of :class:`DetectionEvent`, or a
    path to an event CSV file.
    """
    if isinstance(X, EventStream):
        return X
    if isinstance(X, (str, os.PathLike)):
        return read_events_csv(X)
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"{name}: expected EventStream, DetectionEvent list or CSV path, got {type(X).__name__}")
    if not all(isinstance(e, DetectionEvent) for e in items):
        raise TypeError(f"{name}: every element must be a DetectionEvent")
    return EventStream.from_events(items)


def check_phases(phases, d=None, name="phases") -> np.ndarray:
    arr = np.asarray(phases, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if d is not None and arr.size != d:
        raise ValueError(f"{name} has {arr.size} entries, expected {d}")
    return arr


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value
