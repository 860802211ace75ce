"""Core signal types: timestamped multi-channel trajectories and phase-normalized views.

A Trajectory is the unit of demonstration, observation and control reference
throughout the toolkit. Channels are independent scalars tagged with a kind
(Cartesian meters or angular radians) so downstream stages know which unit
conventions to apply. Phase normalization maps a trajectory onto a uniform
grid over [0, 1], decoupling its shape from its duration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CsvParseError, MalformedInput

CARTESIAN = "cartesian-m"
ANGULAR = "angular-rad"

_KINDS = (CARTESIAN, ANGULAR)
_DEFAULT_UNITS = {CARTESIAN: "m", ANGULAR: "rad"}


@dataclass(frozen=True)
class ChannelSpec:
    """Descriptor for one scalar channel of a trajectory."""

    name: str
    kind: str = CARTESIAN
    unit: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise MalformedInput(f"unknown channel kind {self.kind!r}")
        if not self.unit:
            object.__setattr__(self, "unit", _DEFAULT_UNITS[self.kind])


@dataclass(frozen=True)
class Trajectory:
    """Timestamped multi-channel signal.

    times:  (S,) strictly increasing timestamps in seconds.
    values: (S, N) one row per sample, one column per channel.
    rate:   nominal sample rate in Hz (> 0).
    """

    channels: tuple[ChannelSpec, ...]
    times: np.ndarray
    values: np.ndarray
    rate: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise MalformedInput(
                f"values shape {values.shape} does not match {times.shape[0]} timestamps"
            )
        if values.shape[1] != len(self.channels):
            raise MalformedInput(
                f"{values.shape[1]} value columns for {len(self.channels)} channels"
            )
        if times.size >= 2 and not np.all(np.diff(times) > 0):
            raise MalformedInput("timestamps must be strictly increasing")
        if not self.rate > 0:
            raise MalformedInput(f"rate must be > 0, got {self.rate}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_samples(self) -> int:
        return int(self.times.shape[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def channel_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def channel_index(self, name: str) -> int:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return i
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.channel_index(name)]


@dataclass(frozen=True)
class PhasedTrajectory:
    """A trajectory resampled onto a uniform phase grid over [0, 1].

    phases: (S,) uniform grid, first element 0, last element 1, S >= 2.
    values: (S, N) channel values on the grid.
    duration: original wall-clock duration in seconds.
    """

    channels: tuple[ChannelSpec, ...]
    phases: np.ndarray
    values: np.ndarray
    duration: float

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if phases.size < 2:
            raise MalformedInput("phase grid needs at least 2 points")
        if not (math.isclose(phases[0], 0.0) and math.isclose(phases[-1], 1.0)):
            raise MalformedInput("phase grid must start at 0 and end at 1")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return int(self.phases.shape[0])

    def column(self, name: str) -> np.ndarray:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return self.values[:, i]
        raise KeyError(name)


def to_phase(traj: Trajectory, n_points: int = 100) -> PhasedTrajectory:
    """Resample a trajectory onto a uniform phase grid by linear interpolation.

    Phase 0 maps to the first timestamp, phase 1 to the last; the returned
    duration is their difference.
    """
    if traj.n_samples < 2:
        raise MalformedInput("to_phase needs at least 2 samples")
    if n_points < 2:
        raise MalformedInput("phase grid needs at least 2 points")
    t0, t1 = traj.times[0], traj.times[-1]
    phases = np.linspace(0.0, 1.0, n_points)
    grid_t = t0 + phases * (t1 - t0)
    values = np.empty((n_points, traj.n_channels))
    for j in range(traj.n_channels):
        values[:, j] = np.interp(grid_t, traj.times, traj.values[:, j])
    return PhasedTrajectory(traj.channels, phases, values, float(t1 - t0))


def from_phase(phased: PhasedTrajectory, times: np.ndarray, rate: float) -> Trajectory:
    """Interpolate a phased trajectory back onto explicit timestamps.

    The timestamps are mapped to phases relative to their own span.
    """
    times = np.asarray(times, dtype=float)
    span = times[-1] - times[0]
    phases = (times - times[0]) / span if span > 0 else np.zeros_like(times)
    values = np.empty((times.size, len(phased.channels)))
    for j in range(len(phased.channels)):
        values[:, j] = np.interp(phases, phased.phases, phased.values[:, j])
    return Trajectory(phased.channels, times, values, rate)


def trim_at_onset(
    traj: Trajectory,
    velocity_threshold: float,
    channel_indices: list[int] | None = None,
) -> Trajectory:
    """Drop everything before the first velocity-threshold crossing.

    Keeps training demonstrations and live observations on the same clock:
    both define "motion start" as the first sample whose finite-difference
    speed on the monitored channels exceeds the threshold. Returns the
    trajectory unchanged when nothing crosses.
    """
    if traj.n_samples < 2:
        raise MalformedInput("trim_at_onset needs at least 2 samples")
    cols = (
        traj.values if channel_indices is None else traj.values[:, channel_indices]
    )
    dt = np.diff(traj.times)
    speeds = np.abs(np.diff(cols, axis=0)) / dt[:, None]
    hot = np.any(speeds > velocity_threshold, axis=1)
    idx = int(np.argmax(hot))
    if not hot[idx] or idx == 0:
        return traj
    return Trajectory(
        traj.channels, traj.times[idx:], traj.values[idx:], traj.rate
    )


def derivative(traj: Trajectory) -> Trajectory:
    """Differentiate each channel numerically.

    Central differences in the interior; one-sided differences at the
    endpoints so the output keeps the input's length and timestamps.
    """
    if traj.n_samples < 2:
        raise MalformedInput("derivative needs at least 2 samples")
    edge_order = 2 if traj.n_samples >= 3 else 1
    dv = np.gradient(traj.values, traj.times, axis=0, edge_order=edge_order)
    return Trajectory(traj.channels, traj.times, dv, traj.rate)


def save_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV: header ``t,<ch1>,...``, one row per sample.

    Floats are written with 17 significant digits so a load round-trips
    exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["t"] + [c.name for c in traj.channels])
        for t, row in zip(traj.times, traj.values):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def load_csv(path, kinds: dict[str, str] | None = None, rate: float | None = None) -> Trajectory:
    """Read a trajectory CSV written by :func:`save_csv` (or hand-authored).

    kinds maps channel names to channel kinds; unlisted channels default to
    Cartesian meters. The nominal rate is inferred from the median timestep
    unless given. Raises CsvParseError with the offending line number.
    """
    kinds = kinds or {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        text = f.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file", 1) from None
    if not header or header[0].strip() != "t":
        raise CsvParseError("header must start with 't'", 1)
    names = [h.strip() for h in header[1:]]
    if not names:
        raise CsvParseError("header declares no channels", 1)
    times, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(names) + 1:
            raise CsvParseError(
                f"expected {len(names) + 1} fields, got {len(row)}", lineno
            )
        try:
            times.append(float(row[0]))
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise CsvParseError(str(exc), lineno) from None
    if len(times) < 2:
        raise CsvParseError("need at least 2 samples", len(times) + 1)
    times_arr = np.asarray(times)
    if rate is None:
        rate = 1.0 / float(np.median(np.diff(times_arr)))
    channels = tuple(ChannelSpec(n, kinds.get(n, CARTESIAN)) for n in names)
    return Trajectory(channels, times_arr, np.asarray(rows), rate)
