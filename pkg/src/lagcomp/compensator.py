"""Delay-canceling reference generator.

Incoming delayed command packets feed an observation buffer. A state machine
walks Delayed -> Recognizing -> Blending -> Compensating: first pass the
delayed stream through, then identify the motion and its pace, then blend
smoothly from the delayed stream onto the model's prediction, then emit the
posterior mean evaluated far enough ahead to cancel the measured forward
delay plus the known constant backward delay. If the operator departs from
the learned distribution (or the motion ends) the prediction blends back
into the delayed stream (Reverting) and recognition restarts.

Blending follows a sigmoid schedule whose length in ticks equals the initial
gap between the delayed and predicted reference, expressed in millimeters
for Cartesian channels and tenths of a degree for angular ones, so large
jumps take proportionally longer to close.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .netsim import Delivery
from .promp import TaskModel
from .recognition import (
    DEFAULT_DIVERGENCE_MARGIN,
    DEFAULT_OBS_WINDOW,
    DEFAULT_VELOCITY_THRESHOLD,
    ObservationBuffer,
    detect_motion_start,
    divergence_check,
    recognize,
)
from .trajectory import ANGULAR, CARTESIAN, ChannelSpec

DEFAULT_CONTROL_RATE = 100.0  # Hz
DEFAULT_OBS_VARIANCE = 1e-4  # observation accuracy (m^2 or rad^2)
DEFAULT_HORIZON = 25  # future samples attached to each reference


class Mode(enum.Enum):
    DELAYED = "delayed"
    RECOGNIZING = "recognizing"
    BLENDING = "blending"
    COMPENSATING = "compensating"
    REVERTING = "reverting"


#: legal state-machine transitions
_TRANSITIONS = {
    Mode.DELAYED: {Mode.RECOGNIZING},
    Mode.RECOGNIZING: {Mode.BLENDING, Mode.DELAYED},
    Mode.BLENDING: {Mode.COMPENSATING, Mode.REVERTING},
    Mode.COMPENSATING: {Mode.REVERTING},
    Mode.REVERTING: {Mode.DELAYED},
}

_PROVENANCE = {
    Mode.DELAYED: "delayed-passthrough",
    Mode.RECOGNIZING: "delayed-passthrough",
    Mode.BLENDING: "blended",
    Mode.COMPENSATING: "anticipated",
    Mode.REVERTING: "blended",
}


def blend_weight(i: int, gap_ticks: int) -> float:
    """Sigmoid blending weight at step i of a gap_ticks-long schedule."""
    return 1.0 / (1.0 + math.exp(-12.0 * (i / gap_ticks - 0.5)))


def gap_in_ticks(gap: float, kind: str) -> int:
    """Blend length for an initial reference gap.

    Cartesian gaps count in millimeters, angular gaps in tenths of a degree;
    the count is rounded up with a floor of one tick.
    """
    if kind == CARTESIAN:
        units = abs(gap) * 1000.0
    elif kind == ANGULAR:
        units = abs(math.degrees(gap)) * 10.0
    else:
        raise ConfigurationError(f"unknown channel kind {kind!r}")
    return max(1, int(math.ceil(units)))


def conditioned_phase(
    t_obs_sender: float,
    t0: float,
    alpha: float,
    mean_duration: float,
) -> tuple[float, bool]:
    """Phase at which an observation conditions the model.

    Returns (phase clamped to [0, 1], motion_complete flag). Sender times
    before the motion start are the caller's job to skip.
    """
    raw = alpha * (t_obs_sender - t0) / mean_duration
    return min(max(raw, 0.0), 1.0), raw > 1.0


def measure_forward_delay(delivery: Delivery, robot_clock_now: float | None = None) -> float:
    """Per-packet forward delay: receiver clock minus sender timestamp.

    Negative differences (clock skew) clamp to zero; the caller counts them.
    """
    now = delivery.arrival if robot_clock_now is None else robot_clock_now
    return max(0.0, now - delivery.packet.t_sent)


@dataclass
class ControlReference:
    """One per-tick output: channel values plus a lookahead horizon."""

    t: float
    values: np.ndarray
    provenance: str
    horizon: list[tuple[float, np.ndarray]] = field(default_factory=list)


@dataclass
class CompensatorConfig:
    """Static configuration of the compensator."""

    library: list[TaskModel]
    channels: tuple[ChannelSpec, ...]
    backward_delay: float = 0.0  # known constant tau_b + jitter buffer length
    control_rate: float = DEFAULT_CONTROL_RATE
    obs_variance: float = DEFAULT_OBS_VARIANCE
    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD
    obs_window: float = DEFAULT_OBS_WINDOW
    divergence_margin: float = DEFAULT_DIVERGENCE_MARGIN
    monitored: tuple[str, ...] = ()  # defaults to every Cartesian channel
    horizon_len: int = DEFAULT_HORIZON
    enabled: bool = True
    # give up on a detected onset if the observation window never fills
    # (operator stopped mid-start); wall seconds past the window
    recognition_timeout: float = 2.0
    # emitted until the first packet arrives (e.g. the plant's rest pose);
    # zeros otherwise, which can be far from the first real command
    initial_reference: np.ndarray | None = None

    def __post_init__(self):
        if not self.library:
            raise ConfigurationError("task library is empty")
        names = tuple(c.name for c in self.channels)
        for task in self.library:
            if task.channel_names() != names:
                raise ConfigurationError(
                    f"task {task.task_id} channels {task.channel_names()} != {names}"
                )
        if not self.monitored:
            self.monitored = tuple(
                c.name for c in self.channels if c.kind == CARTESIAN
            )

    @property
    def period(self) -> float:
        return 1.0 / self.control_rate

    def monitored_indices(self) -> list[int]:
        names = [c.name for c in self.channels]
        return [names.index(n) for n in self.monitored]


class Compensator:
    """Runtime state machine turning delayed packets into anticipated references."""

    def __init__(self, config: CompensatorConfig):
        self.config = config
        self.buffer = ObservationBuffer()
        self.mode = Mode.DELAYED
        self.task: TaskModel | None = None  # learned prior of the active task
        self.posterior: TaskModel | None = None
        self.alpha = 1.0
        self.t0: float | None = None
        self.last_delayed: np.ndarray | None = None
        self.last_sender_t: float | None = None
        self.last_arrival: float | None = None
        self.last_tau_f = 0.0
        self.last_emitted: np.ndarray | None = None
        self._blend_i: np.ndarray | None = None
        self._blend_ticks: np.ndarray | None = None
        self._revert_from: np.ndarray | None = None
        self._search_from = -np.inf
        self._conditioned_upto: float | None = None
        self._recognizing_since: float | None = None
        self.mode_log: list[tuple[float, Mode]] = [(0.0, Mode.DELAYED)]
        self.skew_warnings = 0
        self.reverts = 0
        self.recognitions = 0

    # ------------------------------------------------------------------
    # ingest path (may run on a different thread than tick)
    # ------------------------------------------------------------------

    def ingest(self, delivery: Delivery) -> None:
        """Feed one delivered command packet into the observation buffer."""
        tau = delivery.arrival - delivery.packet.t_sent
        if tau < 0:
            self.skew_warnings += 1
            tau = 0.0
        self.last_tau_f = tau
        values = np.asarray(delivery.packet.payload, dtype=float)
        self.buffer.insert(delivery.packet.t_sent, values)

    # ------------------------------------------------------------------
    # tick path
    # ------------------------------------------------------------------

    def tick(self, t_now: float) -> ControlReference:
        """Advance one control period and emit the reference for t_now."""
        self._refresh_delayed()
        handler = {
            Mode.DELAYED: self._tick_delayed,
            Mode.RECOGNIZING: self._tick_recognizing,
            Mode.BLENDING: self._tick_blending,
            Mode.COMPENSATING: self._tick_compensating,
            Mode.REVERTING: self._tick_reverting,
        }[self.mode]
        values, provenance = handler(t_now)
        horizon = self._horizon(t_now) if self.posterior is not None else []
        self.last_emitted = values
        return ControlReference(t_now, values, provenance, horizon)

    def set_enabled(self, enabled: bool, t_now: float) -> None:
        """Toggle compensation; an active prediction winds down via Reverting."""
        self.config.enabled = enabled
        if not enabled and self.mode in (Mode.BLENDING, Mode.COMPENSATING):
            self._start_revert(t_now)
        if not enabled and self.mode is Mode.RECOGNIZING:
            self._transition(Mode.DELAYED, t_now)
            self._reset_motion()

    # ------------------------------------------------------------------
    # per-mode handlers
    # ------------------------------------------------------------------

    def _tick_delayed(self, t_now: float) -> tuple[np.ndarray, str]:
        if self.config.enabled:
            t0 = detect_motion_start(
                self.buffer,
                self.config.velocity_threshold,
                self.config.monitored_indices(),
                self._search_from,
            )
            if t0 is not None:
                self.t0 = t0
                self._recognizing_since = t_now
                self._transition(Mode.RECOGNIZING, t_now)
        return self._passthrough(), _PROVENANCE[Mode.DELAYED]

    def _tick_recognizing(self, t_now: float) -> tuple[np.ndarray, str]:
        deadline = (
            self._recognizing_since
            + self.config.obs_window
            + self.config.recognition_timeout
        )
        if t_now > deadline:
            self._transition(Mode.DELAYED, t_now)
            self._reset_motion()
            return self._passthrough(), _PROVENANCE[Mode.DELAYED]
        times, _ = self.buffer.since(self.t0)
        if times.size and times[-1] - self.t0 >= self.config.obs_window:
            result = recognize(
                self.config.library, self.buffer, self.t0, self.config.obs_window
            )
            self.recognitions += 1
            self.alpha = result.alpha
            self.task = next(
                t for t in self.config.library if t.task_id == result.task_id
            )
            self.posterior = self.task
            self._conditioned_upto = None
            self._condition_on_new_observations()
            self._start_blend(t_now)
        return self._passthrough(), _PROVENANCE[Mode.RECOGNIZING]

    def _tick_blending(self, t_now: float) -> tuple[np.ndarray, str]:
        if self._ingest_and_check_divergence(t_now):
            return self.last_emitted, _PROVENANCE[Mode.REVERTING]
        predicted = self._anticipated_values(t_now)
        delayed = self._passthrough()
        beta = np.array(
            [blend_weight(i, n) for i, n in zip(self._blend_i, self._blend_ticks)]
        )
        values = (1.0 - beta) * delayed + beta * predicted
        if np.all(self._blend_i >= self._blend_ticks):
            self._transition(Mode.COMPENSATING, t_now)
        else:
            self._blend_i = np.minimum(self._blend_i + 1, self._blend_ticks)
        return values, _PROVENANCE[Mode.BLENDING]

    def _tick_compensating(self, t_now: float) -> tuple[np.ndarray, str]:
        if self._ingest_and_check_divergence(t_now):
            return self.last_emitted, _PROVENANCE[Mode.REVERTING]
        if self._motion_finished():
            self._start_revert(t_now)
            return self.last_emitted, _PROVENANCE[Mode.REVERTING]
        return self._anticipated_values(t_now), _PROVENANCE[Mode.COMPENSATING]

    def _tick_reverting(self, t_now: float) -> tuple[np.ndarray, str]:
        delayed = self._passthrough()
        beta = np.array(
            [blend_weight(i, n) for i, n in zip(self._blend_i, self._blend_ticks)]
        )
        values = (1.0 - beta) * self._revert_from + beta * delayed
        if np.all(self._blend_i >= self._blend_ticks):
            self._transition(Mode.DELAYED, t_now)
            self._reset_motion()
        else:
            self._blend_i = np.minimum(self._blend_i + 1, self._blend_ticks)
        return values, _PROVENANCE[Mode.REVERTING]

    # ------------------------------------------------------------------
    # transitions and helpers
    # ------------------------------------------------------------------

    def _transition(self, to: Mode, t_now: float) -> None:
        if to not in _TRANSITIONS[self.mode]:
            raise ConfigurationError(f"illegal transition {self.mode} -> {to}")
        self.mode = to
        self.mode_log.append((t_now, to))

    def _reset_motion(self) -> None:
        latest = self.buffer.latest()
        self._search_from = latest[0] if latest else -np.inf
        self.t0 = None
        self.task = None
        self.posterior = None
        self.alpha = 1.0
        self._conditioned_upto = None
        self._blend_i = None
        self._blend_ticks = None
        self._revert_from = None

    def _passthrough(self) -> np.ndarray:
        if self.last_delayed is not None:
            return self.last_delayed.copy()
        if self.config.initial_reference is not None:
            return np.asarray(self.config.initial_reference, dtype=float).copy()
        return np.zeros(len(self.config.channels))

    def _refresh_delayed(self) -> None:
        latest = self.buffer.latest()
        if latest is not None:
            self.last_sender_t, self.last_delayed = latest[0], latest[1].copy()

    def _anticipation_elapsed(self, t_now: float) -> float:
        """Sender-time elapsed since onset at the instant the feedback lands.

        The measured forward delay cancels out of the target sample: the
        prediction is evaluated at now - t0 + backward_delay, which equals
        the classic "conditioning time plus forward plus backward delay".
        """
        return t_now - self.t0 + self.config.backward_delay

    def _anticipated_values(self, t_now: float) -> np.ndarray:
        phase, _ = conditioned_phase(
            self.t0 + self._anticipation_elapsed(t_now),
            self.t0,
            self.alpha,
            self.posterior.mean_duration,
        )
        return self.posterior.mean_matrix(np.array([phase]))[0]

    def _horizon(self, t_now: float) -> list[tuple[float, np.ndarray]]:
        out = []
        for k in range(1, self.config.horizon_len + 1):
            t_k = t_now + k * self.config.period
            phase, _ = conditioned_phase(
                self.t0 + self._anticipation_elapsed(t_k),
                self.t0,
                self.alpha,
                self.posterior.mean_duration,
            )
            out.append((t_k, self.posterior.mean_matrix(np.array([phase]))[0]))
        return out

    def _motion_finished(self) -> bool:
        """The operator-side motion has run past its estimated duration."""
        if self.last_sender_t is None:
            return False
        _, done = conditioned_phase(
            self.last_sender_t, self.t0, self.alpha, self.posterior.mean_duration
        )
        return done

    def _start_blend(self, t_now: float) -> None:
        predicted = self._anticipated_values(t_now)
        delayed = self._passthrough()
        self._blend_ticks = np.array(
            [
                gap_in_ticks(g, c.kind)
                for g, c in zip(predicted - delayed, self.config.channels)
            ]
        )
        self._blend_i = np.zeros(len(self.config.channels), dtype=int)
        self._transition(Mode.BLENDING, t_now)

    def _start_revert(self, t_now: float) -> None:
        self._revert_from = (
            self.last_emitted.copy()
            if self.last_emitted is not None
            else self._passthrough()
        )
        delayed = self._passthrough()
        self._blend_ticks = np.array(
            [
                gap_in_ticks(g, c.kind)
                for g, c in zip(self._revert_from - delayed, self.config.channels)
            ]
        )
        self._blend_i = np.zeros(len(self.config.channels), dtype=int)
        self.reverts += 1
        self._transition(Mode.REVERTING, t_now)

    def _ingest_and_check_divergence(self, t_now: float) -> bool:
        """Condition on fresh observations; start a revert if one diverges."""
        if self._condition_on_new_observations():
            self._start_revert(t_now)
            return True
        return False

    def _condition_on_new_observations(self) -> bool:
        """Condition the posterior on unconsumed observations.

        Returns True if a divergent observation was seen (posterior is left
        at its last consistent state).
        """
        t_from = (
            self._conditioned_upto if self._conditioned_upto is not None else self.t0
        )
        times, values = self.buffer.since(t_from)
        if self._conditioned_upto is not None and times.size:
            fresh = times > self._conditioned_upto
            times, values = times[fresh], values[fresh]
        monitored = self.config.monitored_indices()
        for t_obs, obs in zip(times, values):
            if t_obs < self.t0:
                continue
            phase, _ = conditioned_phase(
                t_obs, self.t0, self.alpha, self.posterior.mean_duration
            )
            if divergence_check(
                self.task, phase, obs, monitored, self.config.divergence_margin
            ):
                self._conditioned_upto = t_obs
                return True
            promps = tuple(
                p.condition(phase, float(v), self.config.obs_variance)
                for p, v in zip(self.posterior.promps, obs)
            )
            self.posterior = self.posterior.with_promps(promps)
            self._conditioned_upto = t_obs
        return False
