"""Live teleoperation bridge.

Accepts one operator per connection, routes command messages through the
simulated delayed channel into the compensator at the control rate, drives
the planar plant, and streams feedback frames back through the constant
backward delay and jitter buffer. The same newline-delimited JSON messages
travel over plain TCP (scripted clients) or WebSocket (the browser console);
the transport is sniffed from the first line.

Wire schema (the client speaks first so the transport can be sniffed: plain
clients open with a greeting line, browsers open with the HTTP upgrade):
  hi       {"type": "hi"}                          client -> server, NDJSON only
  hello    {"type": "hello", "t": s, "channels": [...], "chain": {...},
            "profile": {...}, "compensation": bool, "command_rate_hz": n,
            "feedback_rate_hz": n}
  command  {"t": s, "seq": n, "channels": {name: value}}
  config   {"type": "config", "compensation": bool}
  feedback {"type": "feedback", "t": s, "mode": str, "q": [...],
            "points": [[x, y], ...], "tau_f_ms": n, "task": id|null,
            "ref": {name: value}, "seq": n}
  error    {"type": "error", "message": str}
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

import numpy as np

from ..compensator import Compensator, CompensatorConfig, Mode
from ..controller import TrackingController, forward_kinematics
from ..harness import build_dataset, fit_library
from ..netsim import (
    Channel,
    DelayProfile,
    JitterBuffer,
    Packet,
    SnapshotClock,
    WallClock,
)
from ..promp import TaskModel, task_from_json
from . import ws

DEFAULT_COMMAND_RATE = 100.0
DEFAULT_FEEDBACK_RATE = 50.0


@dataclass
class SessionConfig:
    """Static per-service configuration."""

    library: list[TaskModel]
    profile: DelayProfile
    compensation: bool = True
    command_rate: float = DEFAULT_COMMAND_RATE
    feedback_rate: float = DEFAULT_FEEDBACK_RATE
    control_rate: float = 100.0

    @classmethod
    def from_dict(cls, doc: dict, seed: int = 0) -> "SessionConfig":
        profile = (
            DelayProfile.from_json(json.dumps(doc["profile"]))
            if "profile" in doc
            else DelayProfile(tau_f=0.750, sigma_f=0.100, tau_b=0.750)
        )
        if doc.get("library"):
            from pathlib import Path

            library = [
                task_from_json(Path(p).read_text(encoding="utf-8"))
                for p in doc["library"]
            ]
        else:
            dataset = build_dataset(seed=seed)
            library = fit_library(dataset)
        return cls(
            library=library,
            profile=profile,
            compensation=doc.get("compensation", True),
            command_rate=doc.get("command_rate_hz", DEFAULT_COMMAND_RATE),
            feedback_rate=doc.get("feedback_rate_hz", DEFAULT_FEEDBACK_RATE),
        )


class _NdjsonTransport:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 first_line: str | None):
        self._reader = reader
        self._writer = writer
        self._pending = first_line

    async def recv(self) -> str | None:
        if self._pending is not None:
            line, self._pending = self._pending, None
            return line
        raw = await self._reader.readline()
        if not raw:
            return None
        return raw.decode("utf-8")

    async def send(self, text: str) -> None:
        self._writer.write((text + "\n").encode("utf-8"))
        await self._writer.drain()


class _WsTransport:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    async def recv(self) -> str | None:
        return await ws.read_text(self._reader, self._writer)

    async def send(self, text: str) -> None:
        self._writer.write(ws.encode_text(text))
        await self._writer.drain()


class Session:
    """One operator connection: reader, control loop and writer tasks."""

    def __init__(self, config: SessionConfig, transport, seed: int = 0):
        self.config = config
        self.transport = transport
        self.wall = WallClock()
        self.clock = SnapshotClock(self.wall)  # frozen within each tick
        rng = np.random.default_rng(seed)
        self.forward = Channel.forward(config.profile, rng)
        self.backward = Channel.backward(config.profile, rng)
        self.jbuf = JitterBuffer(config.profile.tau_b, config.profile.jitter_buffer)
        channels = config.library[0].channels
        self.plant = TrackingController(rate=config.control_rate)
        names = [c.name for c in channels]
        self._hand = (names.index("hand_x"), names.index("hand_y"))
        tip0 = forward_kinematics(self.plant.chain)[-1]
        rest = np.zeros(len(names))
        rest[self._hand[0]], rest[self._hand[1]] = tip0
        self.comp = Compensator(
            CompensatorConfig(
                library=config.library,
                channels=channels,
                backward_delay=config.profile.backward_total,
                control_rate=config.control_rate,
                enabled=config.compensation,
                initial_reference=rest,
            )
        )
        self._names = names
        self._feedback: asyncio.Queue[str] = asyncio.Queue()
        self._control: asyncio.Queue[tuple[str, object]] = asyncio.Queue()
        self._closed = asyncio.Event()
        self._feedback_seq = 0
        self._frames_sent = 0
        self._pending_profile: DelayProfile | None = None
        self._reenable_after_swap = False
        self._rng = rng

    async def run(self) -> None:
        await self._send_hello()
        tasks = [
            asyncio.create_task(self._read_loop()),
            asyncio.create_task(self._control_loop()),
            asyncio.create_task(self._write_loop()),
        ]
        await self._closed.wait()
        for t in tasks:
            t.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)

    def _hello_doc(self) -> dict:
        chain = self.plant.chain
        return {
            "type": "hello",
            "t": self.wall.now,
            "channels": self._names,
            "chain": {
                "lengths": chain.lengths.tolist(),
                "base": list(chain.base),
                "q0": chain.q.tolist(),
            },
            "profile": json.loads(self.config.profile.to_json()),
            "compensation": self.comp.config.enabled,
            "command_rate_hz": self.config.command_rate,
            "feedback_rate_hz": self.config.feedback_rate,
        }

    async def _send_hello(self) -> None:
        await self.transport.send(json.dumps(self._hello_doc()))

    async def _read_loop(self) -> None:
        try:
            while True:
                line = await self.transport.recv()
                if line is None:
                    break
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                    self._handle_message(msg)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    await self._feedback.put(
                        json.dumps({"type": "error", "message": str(exc)})
                    )
        except (ConnectionResetError, asyncio.CancelledError):
            pass
        finally:
            self._closed.set()

    def _handle_message(self, msg: dict) -> None:
        kind = msg.get("type", "command")
        if kind == "hi":
            return
        if kind == "config":
            if "compensation" in msg:
                self._control.put_nowait(("compensation", bool(msg["compensation"])))
            if "profile" in msg:
                profile = DelayProfile.from_json(json.dumps(msg["profile"]))
                self._control.put_nowait(("profile", profile))
        elif kind == "command":
            values = np.array([float(msg["channels"][n]) for n in self._names])
            packet = Packet(int(msg["seq"]), float(msg["t"]), values)
            self.forward.send(packet, self.clock)
        else:
            raise ValueError(f"unknown message type {kind!r}")

    async def _control_loop(self) -> None:
        period = 1.0 / self.config.control_rate
        emit_every = max(1, round(self.config.control_rate / self.config.feedback_rate))
        loop = asyncio.get_running_loop()
        next_tick = loop.time()
        tick = 0
        try:
            while not self._closed.is_set():
                now = self.clock.refresh()
                while not self._control.empty():
                    kind, value = self._control.get_nowait()
                    if kind == "compensation":
                        self.comp.set_enabled(bool(value), now)
                    else:
                        self._request_profile(value, now)
                self._apply_pending_profile(now)
                for delivery in self.forward.poll(self.clock):
                    self.comp.ingest(delivery)
                ref = self.comp.tick(now)
                self.plant.step(
                    np.array([ref.values[self._hand[0]], ref.values[self._hand[1]]])
                )
                if tick % emit_every == 0:
                    frame = self._frame(now, ref)
                    self.backward.send(
                        Packet(self._feedback_seq, now, frame), self.clock
                    )
                    self._feedback_seq += 1
                for delivery in self.backward.poll(self.clock):
                    self.jbuf.push(delivery.packet, delivery.arrival)
                for packet in self.jbuf.pop(self.clock):
                    await self._feedback.put(packet.payload)
                tick += 1
                next_tick += period
                delay = next_tick - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_tick = loop.time()  # fell behind; don't burst
        except asyncio.CancelledError:
            pass

    def _request_profile(self, profile: DelayProfile, now: float) -> None:
        """Queue a delay-profile swap; active predictions wind down first."""
        self._pending_profile = profile
        if self.comp.mode not in (Mode.DELAYED,):
            self._reenable_after_swap = self.comp.config.enabled
            self.comp.set_enabled(False, now)

    def _apply_pending_profile(self, now: float) -> None:
        if self._pending_profile is None or self.comp.mode is not Mode.DELAYED:
            return
        profile = self._pending_profile
        self._pending_profile = None
        self.config.profile = profile
        self.forward = Channel.forward(profile, self._rng)
        self.backward = Channel.backward(profile, self._rng)
        self.jbuf = JitterBuffer(profile.tau_b, profile.jitter_buffer)
        self.comp.config.backward_delay = profile.backward_total
        if self._reenable_after_swap:
            self.comp.set_enabled(True, now)
            self._reenable_after_swap = False
        # tell the client the new law is live (single writer: via the queue)
        self._feedback.put_nowait(json.dumps(self._hello_doc()))

    def _frame(self, now: float, ref) -> str:
        points = forward_kinematics(self.plant.chain)
        task_id = self.comp.task.task_id if self.comp.task is not None else None
        doc = {
            "type": "feedback",
            "t": now,
            "seq": self._feedback_seq,
            "mode": self.comp.mode.value,
            "q": [round(v, 6) for v in self.plant.chain.q.tolist()],
            "points": [[round(x, 6), round(y, 6)] for x, y in points.tolist()],
            "tau_f_ms": round(self.comp.last_tau_f * 1000.0, 3),
            "task": task_id,
            "ref": {
                n: round(float(v), 6) for n, v in zip(self._names, ref.values)
            },
            "provenance": ref.provenance,
        }
        return json.dumps(doc)

    async def _write_loop(self) -> None:
        try:
            while True:
                frame = await self._feedback.get()
                await self.transport.send(frame)
                self._frames_sent += 1
        except (ConnectionResetError, asyncio.CancelledError):
            pass
        finally:
            self._closed.set()


async def _handle_connection(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    config: SessionConfig,
    seed: int,
) -> None:
    try:
        first = (await reader.readline()).decode("utf-8", errors="replace")
        if not first:
            return
        if first.startswith("GET "):
            await ws.handshake(reader, writer, first.rstrip())
            transport = _WsTransport(reader, writer)
        else:
            transport = _NdjsonTransport(reader, writer, first)
        session = Session(config, transport, seed=seed)
        await session.run()
    except (ws.WsProtocolError, ConnectionResetError):
        pass
    finally:
        try:
            writer.close()
            await writer.wait_closed()
        except (ConnectionResetError, BrokenPipeError):
            pass


async def serve(host: str, port: int, config: SessionConfig, seed: int = 0):
    """Listen for operator connections until cancelled."""
    server = await asyncio.start_server(
        lambda r, w: _handle_connection(r, w, config, seed), host, port
    )
    async with server:
        print(f"lagcomp service on {host}:{port}", flush=True)
        await server.serve_forever()
