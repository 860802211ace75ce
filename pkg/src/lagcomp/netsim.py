"""Simulated communication fabric.

Packets carry sender timestamps through channels with a deterministic delay
plus Gaussian jitter, Bernoulli loss and the reordering that follows from
independent per-packet delays. A receiver-side jitter buffer converts the
stochastic delay into a constant one by releasing each packet at send time
plus a fixed total and dropping packets that arrive later than that.

Everything runs against a clock abstraction: a virtual clock stepped by the
simulation loop for deterministic tests, or a wall clock for live sessions.
The channel endpoints are safe for one producer and one consumer on separate
threads.
"""

from __future__ import annotations

import heapq
import json
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import MalformedInput

DELAY_FLOOR = 1e-3  # physical causality: jittered delays never go below 1 ms
JITTER_RATIO = 2.0 / 15.0  # default jitter std as a fraction of the mean delay


class VirtualClock:
    """Monotone simulated time advanced explicitly by the scheduler."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    @property
    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise MalformedInput("clock cannot move backwards")
        self._now += dt
        return self._now


class WallClock:
    """Monotonic wall-clock adapter with the same interface as VirtualClock."""

    def __init__(self):
        self._origin = time.monotonic()

    @property
    def now(self) -> float:
        return time.monotonic() - self._origin


class SnapshotClock:
    """Freezes another clock between refreshes.

    A wall-clock control loop refreshes once per tick so that everything in
    the tick (sends, polls, buffer releases) sees one timestamp, exactly
    like the virtual-time scheduler. Otherwise a packet stamped at the tick
    top would look microseconds "late" to a constant-delay release deadline.
    """

    def __init__(self, source):
        self._source = source
        self._now = source.now

    @property
    def now(self) -> float:
        return self._now

    def refresh(self) -> float:
        self._now = self._source.now
        return self._now


@dataclass(frozen=True)
class Packet:
    """One timestamped message: a command sample or a feedback frame."""

    seq: int
    t_sent: float
    payload: object


@dataclass(frozen=True)
class Delivery:
    """A packet together with the receiver-side arrival time."""

    packet: Packet
    arrival: float


@dataclass(frozen=True)
class DelayProfile:
    """Stochastic law of the simulated link.

    tau_f is the deterministic forward delay, sigma_f its Gaussian jitter
    std (defaults to 2/15 of tau_f), tau_b the constant backward delay,
    jitter_buffer the receiver buffer length d, loss the forward packet loss
    probability. All times in seconds.
    """

    tau_f: float = 0.0
    sigma_f: float = -1.0  # -1 means "use JITTER_RATIO * tau_f"
    tau_b: float = 0.0
    jitter_buffer: float = 0.0
    loss: float = 0.0

    def __post_init__(self):
        if self.sigma_f < 0:
            object.__setattr__(self, "sigma_f", JITTER_RATIO * self.tau_f)
        if self.tau_f < 0 or self.tau_b < 0 or self.jitter_buffer < 0:
            raise MalformedInput("delays must be >= 0")
        if not 0 <= self.loss < 1:
            raise MalformedInput(f"loss probability must be in [0, 1), got {self.loss}")

    @classmethod
    def round_trip(cls, total: float, jitter_buffer: float = 0.0, loss: float = 0.0) -> "DelayProfile":
        """Symmetric profile for a target round-trip time: tau_f = tau_b = total/2."""
        half = total / 2.0
        return cls(tau_f=half, tau_b=half, jitter_buffer=jitter_buffer, loss=loss)

    @property
    def backward_total(self) -> float:
        """Constant robot-to-operator delay as seen after the jitter buffer."""
        return self.tau_b + self.jitter_buffer

    def to_json(self) -> str:
        doc = {
            "tau_f_ms": self.tau_f * 1e3,
            "sigma_ms": self.sigma_f * 1e3,
            "tau_b_ms": self.tau_b * 1e3,
            "jitter_buffer_ms": self.jitter_buffer * 1e3,
            "loss": self.loss,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DelayProfile":
        doc = json.loads(text)
        tau_f = float(doc.get("tau_f_ms", 0.0)) / 1e3
        sigma = float(doc["sigma_ms"]) / 1e3 if "sigma_ms" in doc else -1.0
        return cls(
            tau_f=tau_f,
            sigma_f=sigma,
            tau_b=float(doc.get("tau_b_ms", 0.0)) / 1e3,
            jitter_buffer=float(doc.get("jitter_buffer_ms", 0.0)) / 1e3,
            loss=float(doc.get("loss", 0.0)),
        )


def sample_forward_delay(profile: DelayProfile, rng: np.random.Generator) -> float:
    """One forward-delay draw: deterministic part plus Gaussian jitter.

    Jittered draws are truncated below at 1 ms; a zero-jitter profile
    returns the deterministic delay exactly (including zero).
    """
    if profile.sigma_f == 0.0:
        return profile.tau_f
    return max(DELAY_FLOOR, profile.tau_f + profile.sigma_f * rng.standard_normal())


class Channel:
    """Unreliable, unordered one-way link.

    Each packet gets an independent delay draw at send time; lost packets
    vanish silently. poll returns everything whose arrival time has passed,
    in arrival order, which may differ from send order.
    """

    def __init__(
        self,
        deterministic: float,
        sigma: float = 0.0,
        loss: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        self._profile = DelayProfile(tau_f=deterministic, sigma_f=sigma, loss=loss)
        self._rng = rng if rng is not None else np.random.default_rng()
        self._heap: list[tuple[float, int, Packet]] = []
        self._tiebreak = 0
        self._lock = threading.Lock()
        self.sent = 0
        self.lost = 0

    @classmethod
    def forward(cls, profile: DelayProfile, rng: np.random.Generator) -> "Channel":
        return cls(profile.tau_f, profile.sigma_f, profile.loss, rng)

    @classmethod
    def backward(cls, profile: DelayProfile, rng: np.random.Generator) -> "Channel":
        return cls(profile.tau_b, 0.0, 0.0, rng)

    def send(self, packet: Packet, clock) -> None:
        with self._lock:
            self.sent += 1
            if self._profile.loss > 0 and self._rng.random() < self._profile.loss:
                self.lost += 1
                return
            delay = sample_forward_delay(self._profile, self._rng)
            self._tiebreak += 1
            heapq.heappush(self._heap, (clock.now + delay, self._tiebreak, packet))

    def poll(self, clock) -> list[Delivery]:
        out = []
        with self._lock:
            while self._heap and self._heap[0][0] <= clock.now:
                arrival, _, packet = heapq.heappop(self._heap)
                out.append(Delivery(packet, arrival))
        return out

    def pending(self) -> int:
        with self._lock:
            return len(self._heap)


class JitterBuffer:
    """Receiver buffer that turns stochastic delay into a constant delay.

    A packet sent at s is released at exactly s + backward_delay + length if
    it arrived by then; later arrivals are dropped and counted. Released
    frames come out in sequence order.
    """

    def __init__(self, backward_delay: float, length: float):
        if backward_delay < 0 or length < 0:
            raise MalformedInput("delays must be >= 0")
        self.backward_delay = float(backward_delay)
        self.length = float(length)
        self._heap: list[tuple[float, int, Packet]] = []
        self._lock = threading.Lock()
        self.dropped = 0

    @property
    def total_delay(self) -> float:
        return self.backward_delay + self.length

    def push(self, packet: Packet, arrival: float) -> bool:
        """Insert an arrived packet; returns False if it was too late."""
        release = packet.t_sent + self.total_delay
        with self._lock:
            if arrival > release:
                self.dropped += 1
                return False
            heapq.heappush(self._heap, (release, packet.seq, packet))
        return True

    def pop(self, clock) -> list[Packet]:
        """Release every packet whose constant-delay deadline has passed."""
        out = []
        with self._lock:
            while self._heap and self._heap[0][0] <= clock.now:
                out.append(heapq.heappop(self._heap)[2])
        return out
