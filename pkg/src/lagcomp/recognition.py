"""Online motion recognition from delayed observations.

The observation buffer reassembles delayed packets in sender-time order.
Once the end-effector speed crosses a threshold the motion has started;
the early observations are then matched against every task's mean (each
modulated to its own mean duration) by summed per-channel L1 distance, and
the demonstrated time modulation that best explains the observed pace is
picked from the recorded candidate set. A tube test around the learned
distribution flags when the operator departs from anything demonstrated.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ModelError
from .promp import TaskModel

DEFAULT_VELOCITY_THRESHOLD = 0.02  # m/s on hand channels
DEFAULT_DIVERGENCE_MARGIN = 0.05  # m added to the learned std
DEFAULT_OBS_WINDOW = 1.0  # seconds of sender time used for recognition


class ObservationBuffer:
    """Delayed samples reassembled in sender-timestamp order.

    Safe for one writer (packet ingest) and one reader (the control tick).
    """

    def __init__(self):
        self._times: list[float] = []
        self._values: list[np.ndarray] = []
        self._lock = threading.Lock()
        self.t0: float | None = None

    def __len__(self) -> int:
        with self._lock:
            return len(self._times)

    def insert(self, t_sent: float, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        with self._lock:
            idx = bisect.bisect(self._times, t_sent)
            self._times.insert(idx, t_sent)
            self._values.insert(idx, values)

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Copy of (times, values) sorted by sender time."""
        with self._lock:
            if not self._times:
                return np.empty(0), np.empty((0, 0))
            return np.asarray(self._times), np.stack(self._values)

    def since(self, t_from: float) -> tuple[np.ndarray, np.ndarray]:
        """Samples with sender time >= t_from."""
        times, values = self.snapshot()
        if times.size == 0:
            return times, values
        start = np.searchsorted(times, t_from)
        return times[start:], values[start:]

    def latest(self) -> tuple[float, np.ndarray] | None:
        with self._lock:
            if not self._times:
                return None
            return self._times[-1], self._values[-1]

    def trim_before(self, t_cut: float) -> None:
        """Drop samples older than t_cut (memory bound for long sessions)."""
        with self._lock:
            start = bisect.bisect_left(self._times, t_cut)
            if start:
                del self._times[:start]
                del self._values[:start]


@dataclass(frozen=True)
class RecognitionResult:
    """Outcome of matching early observations against the task library."""

    task_id: str
    score: float
    alpha: float
    t0: float


def detect_motion_start(
    buffer: ObservationBuffer,
    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
    channel_indices: list[int] | None = None,
    search_from: float = -np.inf,
) -> float | None:
    """Sender timestamp of the first sample whose speed crosses the threshold.

    Speed is the finite difference between consecutive buffered samples on
    the monitored channels; the crossing is attributed to the earlier sample
    of the pair. Returns None while nothing moves.
    """
    times, values = buffer.since(search_from)
    if times.size < 2:
        return None
    cols = values if channel_indices is None else values[:, channel_indices]
    dt = np.diff(times)
    speeds = np.abs(np.diff(cols, axis=0)) / dt[:, None]
    hot = np.any(speeds > velocity_threshold, axis=1)
    idx = np.argmax(hot)
    if not hot[idx]:
        return None
    return float(times[idx])


def _distance_to_task(
    task: TaskModel,
    times: np.ndarray,
    values: np.ndarray,
    t0: float,
    alpha: float = 1.0,
) -> float:
    """Summed per-channel L1 distance between observations and a task mean.

    Observation at sender time t is compared to the mean at phase
    alpha * (t - t0) / mean_duration, clamped into [0, 1].
    """
    phases = alpha * (times - t0) / task.mean_duration
    mean = task.mean_matrix(np.clip(phases, 0.0, 1.0))
    return float(np.sum(np.abs(values - mean)))


def recognize(
    library: list[TaskModel],
    buffer: ObservationBuffer,
    t0: float,
    n_obs_window: float = DEFAULT_OBS_WINDOW,
) -> RecognitionResult:
    """Pick the task whose duration-modulated mean best explains the onset.

    Uses the observations within n_obs_window seconds of sender time after
    t0. Ties break toward the lowest task id. The winning task's time
    modulation is estimated from its recorded candidate set.
    """
    if not library:
        raise ConfigurationError("task library is empty")
    times, values = buffer.since(t0)
    keep = times <= t0 + n_obs_window
    times, values = times[keep], values[keep]
    best: tuple[float, str, TaskModel] | None = None
    for task in library:
        score = _distance_to_task(task, times, values, t0)
        key = (score, task.task_id)
        if best is None or key < (best[0], best[1]):
            best = (score, task.task_id, task)
    score, _, task = best
    alpha = estimate_alpha(task, buffer, t0, n_obs_window)
    return RecognitionResult(task.task_id, score, alpha, t0)


def estimate_alpha(
    task: TaskModel,
    buffer: ObservationBuffer,
    t0: float,
    n_obs_window: float = DEFAULT_OBS_WINDOW,
) -> float:
    """Best time modulation from the demonstrated candidate set.

    Scans the task's recorded modulations (no interpolation) and returns the
    one whose modulated mean is L1-closest to the early observations; ties
    keep the earliest candidate.
    """
    if not task.alphas:
        raise ModelError("task has no recorded time modulations")
    times, values = buffer.since(t0)
    keep = times <= t0 + n_obs_window
    times, values = times[keep], values[keep]
    best_alpha, best_score = None, np.inf
    for alpha in task.alphas:
        score = _distance_to_task(task, times, values, t0, alpha)
        if score < best_score:
            best_alpha, best_score = alpha, score
    return float(best_alpha)


def divergence_check(
    task: TaskModel,
    phase: float,
    values: np.ndarray,
    monitored_indices: list[int],
    margin: float = DEFAULT_DIVERGENCE_MARGIN,
) -> bool:
    """True when an observation leaves the learned tube on a monitored channel.

    The tube is the learned mean plus/minus one learned standard deviation
    plus the margin, checked per monitored channel at the matched phase.
    The comparison is strict: sitting exactly on the boundary is still inside.
    """
    p = np.array([min(max(phase, 0.0), 1.0)])
    for idx in monitored_indices:
        promp = task.promps[idx]
        mean = float(promp.mean_at(p)[0])
        std = float(promp.std_at(p)[0])
        if abs(float(values[idx]) - mean) > std + margin:
            return True
    return False
