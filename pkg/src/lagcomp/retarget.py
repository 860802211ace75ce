"""Operator-frame to robot-frame mapping.

Angular channels are shifted so the robot reproduces the operator's motion
relative to its own initial pose; Cartesian channels are additionally scaled
by a fixed factor to account for the size difference. The center-of-mass
ground point travels as a normalized offset along the line between the feet
and is reconstructed on the robot's own support line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSupport, MappingError
from .trajectory import CARTESIAN, ChannelSpec, Trajectory

DEFAULT_SCALE = 0.4


@dataclass(frozen=True)
class RetargetConfig:
    """Fixed mapping between operator channels and robot channels.

    joint_map takes operator channel names to robot channel names and must be
    injective. q0_human / q0_robot are the initial poses, keyed by each
    side's own channel names. feet_left / feet_right are the operator's
    ground anchor points used for the center-of-mass offset; perp_bounds is
    the (min, max) displacement used to normalize motion orthogonal to the
    support line.
    """

    joint_map: dict[str, str]
    q0_human: dict[str, float]
    q0_robot: dict[str, float]
    feet_left: tuple[float, float] = (0.0, 0.0)
    feet_right: tuple[float, float] = (0.2, 0.0)
    scale: float = DEFAULT_SCALE
    perp_bounds: tuple[float, float] = (-0.1, 0.1)

    def __post_init__(self):
        if not self.scale > 0:
            raise MappingError(f"scale must be > 0, got {self.scale}")
        targets = list(self.joint_map.values())
        if len(set(targets)) != len(targets):
            raise MappingError("joint map must be injective")
        if np.allclose(self.feet_left, self.feet_right):
            raise DegenerateSupport("feet anchors coincide")

    def robot_name(self, human_channel: str) -> str:
        try:
            return self.joint_map[human_channel]
        except KeyError:
            raise MappingError(f"channel {human_channel!r} not in joint map") from None


def _initial_pair(cfg: RetargetConfig, human_channel: str) -> tuple[float, float]:
    robot_channel = cfg.robot_name(human_channel)
    try:
        return cfg.q0_human[human_channel], cfg.q0_robot[robot_channel]
    except KeyError as exc:
        raise MappingError(f"missing initial pose for {exc.args[0]!r}") from None


def retarget_joint(channel: str, q_human: float, cfg: RetargetConfig) -> float:
    """Shift one angular channel: robot initial pose plus the operator's excursion."""
    q0_h, q0_r = _initial_pair(cfg, channel)
    return q0_r + (q_human - q0_h)


def scale_cartesian(
    p_human: np.ndarray,
    cfg: RetargetConfig,
    channels: tuple[str, ...] | None = None,
) -> np.ndarray:
    """Scale Cartesian channels about the initial poses.

    Output is p0_robot + scale * (p_human - p0_human) componentwise. When no
    channel names are given both initial poses default to the origin, i.e.
    pure scaling.
    """
    p_human = np.asarray(p_human, dtype=float)
    if channels is None:
        p0_h = np.zeros_like(p_human)
        p0_r = np.zeros_like(p_human)
    else:
        pairs = [_initial_pair(cfg, c) for c in channels]
        p0_h = np.array([p[0] for p in pairs])
        p0_r = np.array([p[1] for p in pairs])
    return p0_r + cfg.scale * (p_human - p0_h)


def com_offset(p_com: np.ndarray, cfg: RetargetConfig) -> float:
    """Project the ground CoM onto the support line, normalized to foot spacing.

    0 is the left foot, 1 the right foot, 0.5 the midpoint. The value is not
    clamped here so divergence past the support edge stays observable; the
    reconstruction side clamps.
    """
    left = np.asarray(cfg.feet_left, dtype=float)
    right = np.asarray(cfg.feet_right, dtype=float)
    axis = right - left
    norm2 = float(axis @ axis)
    if norm2 < 1e-24:
        raise DegenerateSupport("feet anchors coincide")
    return float((np.asarray(p_com, dtype=float) - left) @ axis / norm2)


def reconstruct_com(
    offset: float,
    feet_left: tuple[float, float],
    feet_right: tuple[float, float],
) -> np.ndarray:
    """Place the robot CoM on its own support line at the (clamped) offset."""
    left = np.asarray(feet_left, dtype=float)
    right = np.asarray(feet_right, dtype=float)
    if np.allclose(left, right):
        raise DegenerateSupport("feet anchors coincide")
    o = min(max(float(offset), 0.0), 1.0)
    return left + o * (right - left)


def com_offset_orthogonal(p_com: np.ndarray, cfg: RetargetConfig) -> float:
    """Normalized CoM displacement orthogonal to the support line.

    Mirrors the along-line formula: the signed distance from the line is
    mapped through the configured (min, max) displacement bounds so 0 and 1
    are the extreme demonstrated excursions. Not clamped.
    """
    left = np.asarray(cfg.feet_left, dtype=float)
    right = np.asarray(cfg.feet_right, dtype=float)
    axis = right - left
    norm = float(np.hypot(*axis))
    if norm < 1e-12:
        raise DegenerateSupport("feet anchors coincide")
    normal = np.array([-axis[1], axis[0]]) / norm
    d = float((np.asarray(p_com, dtype=float) - left) @ normal)
    lo, hi = cfg.perp_bounds
    return (d - lo) / (hi - lo)


def reconstruct_com_orthogonal(
    offset: float,
    feet_left: tuple[float, float],
    feet_right: tuple[float, float],
    perp_bounds: tuple[float, float],
) -> float:
    """Invert :func:`com_offset_orthogonal` on the robot side (clamped)."""
    lo, hi = perp_bounds
    o = min(max(float(offset), 0.0), 1.0)
    return lo + o * (hi - lo)


def retarget_trajectory(traj: Trajectory, cfg: RetargetConfig) -> Trajectory:
    """Map a whole operator trajectory into robot channels.

    Angular channels get the initial-pose shift, Cartesian channels the
    scaled shift; channels are renamed through the joint map.
    """
    out = np.empty_like(traj.values)
    new_channels = []
    for j, ch in enumerate(traj.channels):
        q0_h, q0_r = _initial_pair(cfg, ch.name)
        gain = cfg.scale if ch.kind == CARTESIAN else 1.0
        out[:, j] = q0_r + gain * (traj.values[:, j] - q0_h)
        new_channels.append(ChannelSpec(cfg.robot_name(ch.name), ch.kind, ch.unit))
    return Trajectory(tuple(new_channels), traj.times, out, traj.rate)


def config_to_json(cfg: RetargetConfig) -> str:
    doc = {
        "scale": cfg.scale,
        "joint_map": cfg.joint_map,
        "q0_R": cfg.q0_robot,
        "q0_H": cfg.q0_human,
        "feet": {"left": list(cfg.feet_left), "right": list(cfg.feet_right)},
        "perp_bounds": list(cfg.perp_bounds),
    }
    return json.dumps(doc, sort_keys=True)


def config_from_json(text: str) -> RetargetConfig:
    doc = json.loads(text)
    return RetargetConfig(
        joint_map=dict(doc["joint_map"]),
        q0_human={k: float(v) for k, v in doc["q0_H"].items()},
        q0_robot={k: float(v) for k, v in doc["q0_R"].items()},
        feet_left=tuple(doc["feet"]["left"]),
        feet_right=tuple(doc["feet"]["right"]),
        scale=float(doc.get("scale", DEFAULT_SCALE)),
        perp_bounds=tuple(doc.get("perp_bounds", (-0.1, 0.1))),
    )
