"""Anticipatory teleoperation toolkit.

Learn probabilistic motion primitives from demonstrated trajectories,
recognize an in-progress motion from delayed observations, condition the
model on them, and emit control references far enough ahead to cancel a
measured stochastic round-trip network delay.
"""

from .errors import LagcompError
from .trajectory import ChannelSpec, PhasedTrajectory, Trajectory
from .promp import BasisConfig, ProMP, TaskModel

__all__ = [
    "LagcompError",
    "ChannelSpec",
    "PhasedTrajectory",
    "Trajectory",
    "BasisConfig",
    "ProMP",
    "TaskModel",
]

__version__ = "0.1.0"
