"""Virtual-time pipeline driver.

One session streams an operator motion through the stochastic forward
channel into the compensator at the control rate, optionally drives the
planar plant with the emitted references, and pushes feedback frames through
the constant backward channel and jitter buffer so round trips are observed
end to end. Everything runs on a virtual clock: deterministic under a seed,
no sleeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..compensator import Compensator, CompensatorConfig, Mode
from ..controller import TrackingController, forward_kinematics
from ..netsim import Channel, DelayProfile, JitterBuffer, Packet, VirtualClock
from ..promp import TaskModel
from ..trajectory import ChannelSpec, Trajectory


@dataclass
class SessionTrace:
    """Everything a session run produces, on the tick grid."""

    times: np.ndarray
    references: np.ndarray  # compensator output per tick
    provenance: list[str]
    delayed: np.ndarray  # delayed passthrough stream (what no-compensation tracks)
    channels: tuple[ChannelSpec, ...]
    mode_log: list[tuple[float, Mode]]
    plant_tip: np.ndarray | None
    round_trips: list[tuple[float, float]]  # (observed, expected) per fresh echo
    feedback_drops: int
    reverts: int
    measured_tau_f: list[float]

    def reference_trajectory(self) -> Trajectory:
        return Trajectory(self.channels, self.times, self.references, self._rate())

    def delayed_trajectory(self) -> Trajectory:
        return Trajectory(self.channels, self.times, self.delayed, self._rate())

    def _rate(self) -> float:
        return 1.0 / float(np.median(np.diff(self.times)))

    def first_transition(self, mode: Mode) -> float | None:
        for t, m in self.mode_log:
            if m == mode:
                return t
        return None


def run_session(
    motion: Trajectory,
    library: list[TaskModel],
    profile: DelayProfile,
    seed: int = 0,
    compensation: bool = True,
    with_plant: bool = False,
    control_rate: float = 100.0,
    obs_variance: float = 1e-4,
    extra_time: float = 1.0,
    compensator_overrides: dict | None = None,
) -> SessionTrace:
    """Stream one robot-frame motion through the full simulated pipeline."""
    clock = VirtualClock()
    rng = np.random.default_rng(seed)
    forward = Channel.forward(profile, rng)
    backward = Channel.backward(profile, rng)
    jbuf = JitterBuffer(profile.tau_b, profile.jitter_buffer)

    config = CompensatorConfig(
        library=library,
        channels=motion.channels,
        backward_delay=profile.backward_total,
        control_rate=control_rate,
        obs_variance=obs_variance,
        enabled=compensation,
        initial_reference=motion.values[0].copy(),
        **(compensator_overrides or {}),
    )
    comp = Compensator(config)
    plant = TrackingController(rate=control_rate) if with_plant else None
    hand_idx = None
    if plant is not None:
        names = list(motion.channel_names())
        hand_idx = (names.index("hand_x"), names.index("hand_y"))

    dt = 1.0 / control_rate
    send_idx = 0
    t_end = (
        float(motion.times[-1])
        + profile.tau_f
        + 4 * profile.sigma_f
        + profile.backward_total
        + extra_time
    )
    times, refs, prov, delayed, tips = [], [], [], [], []
    round_trips: list[tuple[float, float]] = []
    measured: list[float] = []
    feedback_seq = 0

    while clock.now <= t_end:
        now = clock.now
        while send_idx < motion.n_samples and motion.times[send_idx] <= now + 1e-12:
            forward.send(
                Packet(send_idx, float(motion.times[send_idx]), motion.values[send_idx]),
                clock,
            )
            send_idx += 1
        deliveries = forward.poll(clock)
        for delivery in deliveries:
            comp.ingest(delivery)
            measured.append(delivery.arrival - delivery.packet.t_sent)

        ref = comp.tick(now)
        times.append(now)
        refs.append(ref.values)
        prov.append(ref.provenance)
        delayed.append(comp._passthrough())

        if plant is not None:
            plant.step(np.array([ref.values[hand_idx[0]], ref.values[hand_idx[1]]]))
            tips.append(forward_kinematics(plant.chain)[-1])

        # feedback path: the frame echoes the newest command; when the echoed
        # command arrived this very tick the operator-side release closes a
        # full round trip whose expected length is the forward draw plus the
        # constant backward total (tick quantization adds at most 2 periods)
        echo = None
        if deliveries:
            last = deliveries[-1]
            echo = (last.packet.t_sent, last.arrival - last.packet.t_sent)
        backward.send(Packet(feedback_seq, now, echo), clock)
        feedback_seq += 1
        for delivery in backward.poll(clock):
            jbuf.push(delivery.packet, delivery.arrival)
        for frame in jbuf.pop(clock):
            if frame.payload is not None:
                cmd_t, tau_f_cmd = frame.payload
                observed = clock.now - cmd_t
                expected = tau_f_cmd + profile.backward_total
                round_trips.append((observed, expected))

        clock.advance(dt)

    return SessionTrace(
        times=np.asarray(times),
        references=np.stack(refs),
        provenance=prov,
        delayed=np.stack(delayed),
        channels=motion.channels,
        mode_log=list(comp.mode_log),
        plant_tip=np.stack(tips) if tips else None,
        round_trips=round_trips,
        feedback_drops=jbuf.dropped,
        reverts=comp.reverts,
        measured_tau_f=measured,
    )
