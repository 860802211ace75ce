import asyncio
import json

import numpy as np
import pytest

from lagcomp.harness import build_dataset, fit_library
from lagcomp.netsim import DelayProfile
from lagcomp.service import SessionConfig, serve
from lagcomp.service.ws import accept_key, encode_text


@pytest.fixture(scope="module")
def library():
    dataset = build_dataset(seed=0, train_reps=4, test_reps=2)
    return fit_library(dataset), dataset


class ScriptedClient:
    """Replays a robot-frame motion over plain newline-delimited JSON."""

    def __init__(self, host, port):
        self.host = host
        self.port = port
        self.hello = None
        self.sent: list[tuple[float, np.ndarray]] = []
        self.frames: list[dict] = []
        self._t_offset = 0.0

    async def run(self, motion, rate=100.0, toggle=None, tail=1.0):
        reader, writer = await asyncio.open_connection(self.host, self.port)
        loop = asyncio.get_running_loop()
        writer.write(b'{"type": "hi"}\n')
        await writer.drain()
        self.hello = json.loads(await reader.readline())
        # adopt the server clock: our elapsed time plus its hello timestamp
        t_local0 = loop.time()
        self._t_offset = self.hello["t"] - t_local0
        names = self.hello["channels"]

        async def reader_task():
            try:
                while True:
                    raw = await reader.readline()
                    if not raw:
                        return
                    msg = json.loads(raw)
                    msg["t_recv"] = loop.time() + self._t_offset
                    self.frames.append(msg)
            except (ConnectionResetError, asyncio.CancelledError):
                pass

        collect = asyncio.create_task(reader_task())
        period = 1.0 / rate
        next_t = loop.time()
        for seq in range(motion.n_samples):
            now = loop.time() + self._t_offset
            values = motion.values[seq]
            msg = {
                "t": now,
                "seq": seq,
                "channels": {n: float(v) for n, v in zip(names, values)},
            }
            writer.write((json.dumps(msg) + "\n").encode())
            self.sent.append((now, values.copy()))
            if toggle is not None and seq == toggle[0]:
                writer.write(
                    (json.dumps({"type": "config", "compensation": toggle[1]}) + "\n").encode()
                )
            await writer.drain()
            next_t += period
            delay = next_t - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
        await asyncio.sleep(tail)
        collect.cancel()
        writer.close()
        try:
            await writer.wait_closed()
        except ConnectionResetError:
            pass

    def feedback_lag(self, channel_idx=0, t_from=None, t_to=None, max_lag=3.0):
        """Best shift aligning received references onto sent commands."""
        sent_t = np.array([t for t, _ in self.sent])
        sent_v = np.stack([v for _, v in self.sent])
        frames = [f for f in self.frames if f.get("type") == "feedback"]
        recv_t = np.array([f["t_recv"] for f in frames])
        names = self.hello["channels"]
        recv_v = np.array([[f["ref"][n] for n in names] for f in frames])
        mask = np.ones(recv_t.size, dtype=bool)
        if t_from is not None:
            mask &= recv_t >= t_from
        if t_to is not None:
            mask &= recv_t <= t_to
        recv_t, recv_v = recv_t[mask], recv_v[mask]
        lags = np.arange(0.0, max_lag, 0.01)
        costs = []
        for lag in lags:
            t_cmp = recv_t - lag
            ok = (t_cmp >= sent_t[0]) & (t_cmp <= sent_t[-1])
            if ok.sum() < 10:
                costs.append(np.inf)
                continue
            err = 0.0
            for j in range(sent_v.shape[1]):
                interp = np.interp(t_cmp[ok], sent_t, sent_v[:, j])
                err += float(np.mean((recv_v[ok, j] - interp) ** 2))
            costs.append(err)
        return float(lags[int(np.argmin(costs))])


def make_test_motion(dataset, task="lift", idx=0):
    return dataset.test[task][idx]


async def _with_server(config, fn):
    server = await asyncio.start_server(lambda r, w: None, "127.0.0.1", 0)
    port = server.sockets[0].getsockname()[1]
    server.close()
    await server.wait_closed()

    serve_task = asyncio.create_task(serve("127.0.0.1", port, config))
    await asyncio.sleep(0.2)
    try:
        return await fn(port)
    finally:
        serve_task.cancel()
        try:
            await serve_task
        except asyncio.CancelledError:
            pass


class TestWsFraming:
    def test_accept_key_rfc_vector(self):
        assert accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="

    def test_encode_text_small_frame(self):
        frame = encode_text("hi")
        assert frame[0] == 0x81
        assert frame[1] == 2
        assert frame[2:] == b"hi"

    def test_encode_text_medium_frame(self):
        frame = encode_text("x" * 300)
        assert frame[1] == 126
        assert int.from_bytes(frame[2:4], "big") == 300


class TestServiceSession:
    def test_passthrough_lag_matches_round_trip(self, library):
        lib, dataset = library
        profile = DelayProfile(tau_f=0.25, sigma_f=0.02, tau_b=0.25)
        config = SessionConfig(library=lib, profile=profile, compensation=False)
        motion = make_test_motion(dataset)

        async def scenario(port):
            client = ScriptedClient("127.0.0.1", port)
            await client.run(motion, tail=1.5)
            return client

        client = asyncio.run(_with_server(config, scenario))
        assert client.hello["compensation"] is False
        assert len(client.frames) > 50
        lag = client.feedback_lag()
        assert lag == pytest.approx(0.5, abs=0.2)

    def test_compensation_synchronizes_feedback(self, library):
        lib, dataset = library
        profile = DelayProfile(tau_f=0.25, sigma_f=0.02, tau_b=0.25)
        config = SessionConfig(library=lib, profile=profile, compensation=True)
        motion = make_test_motion(dataset)

        async def scenario(port):
            client = ScriptedClient("127.0.0.1", port)
            await client.run(motion, tail=1.5)
            return client

        client = asyncio.run(_with_server(config, scenario))
        comp_frames = [
            f for f in client.frames if f.get("mode") == "compensating"
        ]
        assert comp_frames, "compensation never engaged"
        t_from = comp_frames[0]["t_recv"] + 0.2
        t_to = comp_frames[-1]["t_recv"]
        lag = client.feedback_lag(t_from=t_from, t_to=t_to)
        assert lag < 0.15

    def test_malformed_message_keeps_session_alive(self, library):
        lib, _ = library
        profile = DelayProfile(tau_f=0.05, sigma_f=0.0, tau_b=0.05)
        config = SessionConfig(library=lib, profile=profile)

        async def scenario(port):
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            writer.write(b'{"type": "hi"}\n')
            await writer.drain()
            hello = json.loads(await reader.readline())
            writer.write(b'{"type": "nonsense"}\n')
            await writer.drain()
            frames = []
            while len(frames) < 30:
                msg = json.loads(await reader.readline())
                frames.append(msg)
            writer.close()
            return hello, frames

        hello, frames = asyncio.run(_with_server(config, scenario))
        assert hello["type"] == "hello"
        kinds = {f.get("type") for f in frames}
        assert "error" in kinds
        assert "feedback" in kinds  # session survived the bad message

    def test_toggle_mid_motion_logs_revert(self, library):
        lib, dataset = library
        profile = DelayProfile(tau_f=0.15, sigma_f=0.01, tau_b=0.15)
        config = SessionConfig(library=lib, profile=profile, compensation=True)
        motion = make_test_motion(dataset, task="pull")
        toggle_at = int(motion.n_samples * 0.7)

        async def scenario(port):
            client = ScriptedClient("127.0.0.1", port)
            await client.run(motion, toggle=(toggle_at, False), tail=1.5)
            return client

        client = asyncio.run(_with_server(config, scenario))
        modes = [f["mode"] for f in client.frames if f.get("type") == "feedback"]
        assert "reverting" in modes or "compensating" not in modes[toggle_at:]
        # no feedback jumps beyond the blend bound on any channel
        names = client.hello["channels"]
        refs = np.array(
            [
                [f["ref"][n] for n in names]
                for f in client.frames
                if f.get("type") == "feedback"
            ]
        )
        jumps = np.max(np.abs(np.diff(refs, axis=0)), axis=1)
        stream_step = np.max(np.abs(np.diff(motion.values, axis=0)))
        assert np.max(jumps) < 0.003 + 4 * max(stream_step, 0.002)

    def test_websocket_session_handshake_and_frames(self, library):
        lib, dataset = library
        profile = DelayProfile(tau_f=0.05, sigma_f=0.0, tau_b=0.05)
        config = SessionConfig(library=lib, profile=profile)

        async def scenario(port):
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            writer.write(
                b"GET / HTTP/1.1\r\n"
                b"Host: localhost\r\n"
                b"Upgrade: websocket\r\n"
                b"Connection: Upgrade\r\n"
                b"Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\n"
                b"Sec-WebSocket-Version: 13\r\n\r\n"
            )
            await writer.drain()
            status = await reader.readline()
            assert b"101" in status
            while True:
                line = await reader.readline()
                if line in (b"\r\n", b""):
                    break
            # first server frame should decode to the hello message
            head = await reader.readexactly(2)
            length = head[1] & 0x7F
            if length == 126:
                length = int.from_bytes(await reader.readexactly(2), "big")
            payload = await reader.readexactly(length)
            hello = json.loads(payload)
            writer.close()
            return hello

        hello = asyncio.run(_with_server(config, scenario))
        assert hello["type"] == "hello"
        assert hello["channels"] == ["hand_x", "hand_y"]
