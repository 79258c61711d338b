"""Shared domain types: event series, duration series, and seeded RNG streams."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "ValidationError",
    "SimulationExplosion",
    "RngSpec",
    "EventSeries",
    "DurationSeries",
    "events_to_durations",
    "durations_to_events",
    "drop_burn_in",
]

RNG_ALGORITHM = "philox4x64"


class ValidationError(ValueError):
    """A domain object or operation input violates one of its invariants."""


class SimulationExplosion(RuntimeError):
    """A simulation tripped its intensity guard; ``partial`` holds what was generated."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest digit string that round-trips exactly
    return repr(float(x))


@njit(cache=True)
def _neumaier_cumsum(x):
    # Compensated cumulative sum. Keeps each partial sum correctly rounded, so
    # cumsum(diff(times)) reproduces times bit-for-bit at any magnitude.
    out = np.empty_like(x)
    s = 0.0
    comp = 0.0
    for i in range(x.shape[0]):
        v = x[i] + comp
        t = s + v
        if abs(s) >= abs(v):
            comp = (s - t) + v
        else:
            comp = (v - t) + s
        s = t
        out[i] = s + comp
    return out


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id for the Philox counter-based generator.

    Identical (seed, stream) pairs yield bit-identical random sequences on any
    run, so every replica of a sweep is individually reproducible.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.stream, int) or self.stream < 0:
            raise ValidationError("stream id must be a non-negative integer")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=(self.seed, self.stream))
        return np.random.Generator(np.random.Philox(ss))

    def derive(self, *indices: int) -> "RngSpec":
        """Child spec with a stream id packed from (stream, *indices).

        Each index must fit in 16 bits; the packing is collision-free, which
        lets any single replica of a sweep be re-run in isolation.
        """
        stream = self.stream
        for ix in indices:
            if not (0 <= ix < 2**16):
                raise ValidationError("derived stream indices must be in [0, 65536)")
            stream = (stream << 16) | ix
        return RngSpec(self.seed, stream)


@dataclass(frozen=True)
class EventSeries:
    """Strictly increasing event times on [0, horizon].

    Times are dimensionless model time. Ties are rejected outright: all
    conditional-intensity formulas here assume a simple point process.
    The array is frozen after construction, so instances are safe to share
    across concurrent workers.
    """

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64, copy=True).reshape(-1)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not np.isfinite(self.horizon) or self.horizon < 0.0:
            raise ValidationError("horizon must be finite and non-negative")
        if t.size == 0:
            return
        if not np.isfinite(t).all():
            raise ValidationError("event times must be finite")
        if t[0] < 0.0:
            raise ValidationError("event times must be non-negative")
        d = np.diff(t)
        if t.size > 1 and (d <= 0.0).any():
            i = int(np.argmax(d <= 0.0)) + 1
            raise ValidationError(
                f"event times must be strictly increasing (violated at index {i})"
            )
        if t[-1] > self.horizon:
            raise ValidationError("horizon must not precede the last event time")

    @property
    def n(self) -> int:
        return int(self.times.size)

    def __len__(self) -> int:
        return self.n

    def to_json(self) -> str:
        return json.dumps({"horizon": self.horizon, "times": self.times.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EventSeries":
        obj = json.loads(text)
        if not isinstance(obj, dict) or set(obj) != {"horizon", "times"}:
            raise ValidationError('event JSON must be {"horizon": T, "times": [...]}')
        return cls(np.asarray(obj["times"], dtype=np.float64), float(obj["horizon"]))

    def to_csv(self) -> str:
        lines = ["index,time"]
        for i, t in enumerate(self.times):
            lines.append(f"{i},{_fmt(t)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, horizon: float | None = None) -> "EventSeries":
        """Parse the two-column form. The CSV carries no horizon, so it
        defaults to the last event time unless given explicitly."""
        times = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line == "index,time":
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise ValidationError(f"expected 'index,time' rows, got {line!r}")
            times.append(float(fields[1]))
        arr = np.asarray(times, dtype=np.float64)
        if horizon is None:
            horizon = float(arr[-1]) if arr.size else 0.0
        return cls(arr, horizon)


@dataclass(frozen=True)
class DurationSeries:
    """Strictly positive inter-event durations.

    Together with a start time this is bijective with an EventSeries: the
    compensated cumulative sum reproduces the event times.
    """

    durations: np.ndarray

    def __post_init__(self):
        d = np.array(self.durations, dtype=np.float64, copy=True).reshape(-1)
        d.setflags(write=False)
        object.__setattr__(self, "durations", d)
        if d.size and (not np.isfinite(d).all() or (d <= 0.0).any()):
            raise ValidationError("durations must be finite and strictly positive")

    @property
    def n(self) -> int:
        return int(self.durations.size)

    def __len__(self) -> int:
        return self.n


def events_to_durations(events: EventSeries) -> DurationSeries:
    """Inter-event durations, the first one measured from time zero."""
    if events.n == 0:
        raise ValidationError("cannot derive durations from an empty event series")
    return DurationSeries(np.diff(events.times, prepend=0.0))


def durations_to_events(durations: DurationSeries, start: float = 0.0) -> EventSeries:
    """Cumulative sums of the durations offset by ``start``; horizon is the last time."""
    if durations.n == 0:
        raise ValidationError("cannot build an event series from zero durations")
    times = start + _neumaier_cumsum(np.asarray(durations.durations, dtype=np.float64))
    return EventSeries(times, horizon=float(times[-1]))


def drop_burn_in(events: EventSeries, count: int) -> EventSeries:
    """Discard the first ``count`` events and re-anchor time at the last one dropped.

    Durations of the surviving events are preserved exactly; the horizon moves
    with the anchor.
    """
    if count < 0:
        raise ValidationError("burn-in count must be non-negative")
    if count == 0:
        return events
    if count >= events.n:
        raise ValidationError("burn-in would discard the whole series")
    anchor = events.times[count - 1]
    return EventSeries(events.times[count:] - anchor, events.horizon - anchor)
