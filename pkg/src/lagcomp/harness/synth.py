"""Synthetic demonstration generator.

Stands in for a recorded teleoperation dataset at desk scale: each task is a
family of minimum-jerk point-to-point motions whose goal and one mid-motion
via point are perturbed per repetition, with jittered durations. Operator
trajectories are generated in the operator's frame and retargeted into the
robot frame of the default planar chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..controller import default_chain, forward_kinematics
from ..errors import MalformedInput
from ..retarget import RetargetConfig, retarget_trajectory
from ..trajectory import CARTESIAN, ChannelSpec, Trajectory

COMMAND_RATE = 100.0  # Hz


def min_jerk(tau: np.ndarray) -> np.ndarray:
    """Smooth 0-to-1 profile with zero velocity and acceleration at the ends."""
    tau = np.clip(tau, 0.0, 1.0)
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


def via_bump(tau: np.ndarray) -> np.ndarray:
    """Unit-peak mid-motion bump, zero value and velocity at both ends."""
    return np.sin(np.pi * np.clip(tau, 0.0, 1.0)) ** 2


@dataclass(frozen=True)
class ChannelTarget:
    """One synthetic channel: rest value and task goal, in operator units."""

    name: str
    start: float
    goal: float
    kind: str = CARTESIAN


@dataclass(frozen=True)
class TaskSpec:
    """Recipe for one synthetic task family."""

    task_id: str
    channels: tuple[ChannelTarget, ...]
    duration_mean: float = 6.0
    duration_sigma: float = 0.3
    via_sigma: float = 0.02
    repetitions: int = 6
    lead_in: float = 0.5

    def __post_init__(self):
        if not self.duration_mean > 0:
            raise MalformedInput("duration must be > 0")
        if self.repetitions < 2:
            raise MalformedInput("need at least 2 repetitions")


def synth_demos(spec: TaskSpec, rng: np.random.Generator) -> list[Trajectory]:
    """Operator-frame repetitions of one task, deterministic under the rng."""
    demos = []
    for _ in range(spec.repetitions):
        duration = spec.duration_mean + spec.duration_sigma * rng.standard_normal()
        duration = max(duration, 0.5 * spec.duration_mean)
        goal_pert = spec.via_sigma * rng.standard_normal(len(spec.channels))
        via_pert = spec.via_sigma * rng.standard_normal(len(spec.channels))
        t = np.arange(0, spec.lead_in + duration + 1e-9, 1.0 / COMMAND_RATE)
        tau = (t - spec.lead_in) / duration
        s = min_jerk(tau)
        bump = via_bump(tau)
        values = np.empty((t.size, len(spec.channels)))
        for j, ch in enumerate(spec.channels):
            reach = ch.goal - ch.start + goal_pert[j]
            values[:, j] = ch.start + reach * s + via_pert[j] * bump
        channels = tuple(ChannelSpec(c.name, c.kind) for c in spec.channels)
        demos.append(Trajectory(channels, t, values, COMMAND_RATE))
    return demos


def default_retarget_config() -> RetargetConfig:
    """Operator cursor space to the default chain's workspace (scale 0.4)."""
    tip0 = forward_kinematics(default_chain())[-1]
    return RetargetConfig(
        joint_map={"hand_x": "hand_x", "hand_y": "hand_y"},
        q0_human={"hand_x": 0.0, "hand_y": 0.0},
        q0_robot={"hand_x": float(tip0[0]), "hand_y": float(tip0[1])},
        feet_left=(-0.1, 0.0),
        feet_right=(0.1, 0.0),
        scale=0.4,
    )


def default_task_specs() -> tuple[TaskSpec, TaskSpec]:
    """Two reach families with goals ~0.24 m apart in the robot frame.

    Operator-frame displacements are 2.5x the robot's (scale 0.4): "lift"
    raises the hand, "pull" draws it back toward the body.
    """
    lift = TaskSpec(
        task_id="lift",
        channels=(
            ChannelTarget("hand_x", 0.0, -0.05),
            ChannelTarget("hand_y", 0.0, +0.45),
        ),
    )
    pull = TaskSpec(
        task_id="pull",
        channels=(
            ChannelTarget("hand_x", 0.0, -0.50),
            ChannelTarget("hand_y", 0.0, +0.05),
        ),
    )
    return lift, pull


def sweep_task_specs() -> tuple[TaskSpec, ...]:
    """Slow variants of the default tasks for the delay sweep.

    Ten-second motions leave room to compare anticipated references against
    the ideal stream even at the largest (4 s) round trip, where the lead
    consumes a big part of the motion.
    """
    return tuple(
        TaskSpec(
            task_id=s.task_id,
            channels=s.channels,
            duration_mean=10.0,
            duration_sigma=0.4,
            via_sigma=s.via_sigma,
            repetitions=s.repetitions,
            lead_in=s.lead_in,
        )
        for s in default_task_specs()
    )


def synth_robot_demos(
    spec: TaskSpec,
    rng: np.random.Generator,
    retarget: RetargetConfig | None = None,
) -> list[Trajectory]:
    """Robot-frame repetitions: operator demos passed through retargeting."""
    cfg = retarget or default_retarget_config()
    return [retarget_trajectory(d, cfg) for d in synth_demos(spec, rng)]
