"""Error metrics between trajectories."""

from __future__ import annotations

import numpy as np

from ..errors import AlignmentError
from ..trajectory import Trajectory


def window(traj: Trajectory, t_start: float, t_stop: float) -> Trajectory:
    """Samples with t_start <= t <= t_stop."""
    mask = (traj.times >= t_start) & (traj.times <= t_stop)
    if int(mask.sum()) < 2:
        raise AlignmentError(
            f"window [{t_start:.3f}, {t_stop:.3f}] holds fewer than 2 samples"
        )
    return Trajectory(traj.channels, traj.times[mask], traj.values[mask], traj.rate)


def rms_error(a: Trajectory, b: Trajectory, offset: float = 0.0) -> np.ndarray:
    """Per-channel RMS between a(t) and b(t + offset) on the overlap.

    b is linearly interpolated at a's (shifted) timestamps. The offset is
    the known anticipation lead when comparing a compensated stream against
    the non-delayed one.
    """
    if a.channel_names() != b.channel_names():
        raise AlignmentError("trajectories disagree on channels")
    t_shifted = a.times + offset
    lo = max(t_shifted[0], b.times[0])
    hi = min(t_shifted[-1], b.times[-1])
    mask = (t_shifted >= lo) & (t_shifted <= hi)
    if int(mask.sum()) < 2:
        raise AlignmentError("no overlapping support after realignment")
    diffs = np.empty((int(mask.sum()), a.n_channels))
    for j in range(a.n_channels):
        interp = np.interp(t_shifted[mask], b.times, b.values[:, j])
        diffs[:, j] = a.values[mask, j] - interp
    return np.sqrt(np.mean(diffs**2, axis=0))


def basis_floor(traj: Trajectory, config) -> np.ndarray:
    """Per-channel RMS of the basis reconstruction of a trajectory.

    The irreducible error of representing the signal in the model's basis;
    the zero-delay pipeline cannot do better than this plus conditioning
    slack.
    """
    from ..promp import basis_matrix, fit_weights
    from ..trajectory import to_phase

    phased = to_phase(traj, max(traj.n_samples, 2 * config.m))
    out = np.empty(traj.n_channels)
    phi = basis_matrix(phased.phases, config)
    for j in range(traj.n_channels):
        w = fit_weights(phased.phases, phased.values[:, j], config)
        out[j] = float(np.sqrt(np.mean((phi @ w - phased.values[:, j]) ** 2)))
    return out
