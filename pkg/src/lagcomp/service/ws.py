"""Minimal server-side WebSocket framing (RFC 6455, text frames).

Just enough for the browser console: handshake over an already-accepted
stream, masked client text frames in, unmasked server text frames out,
ping/pong and close. No extensions, no fragmented server sends.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class WsProtocolError(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


async def handshake(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    request_line: str,
) -> None:
    """Complete the upgrade; request_line is the already-consumed first line."""
    headers: dict[str, str] = {}
    while True:
        line = (await reader.readline()).decode("latin-1").rstrip("\r\n")
        if not line:
            break
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        await writer.drain()
        raise WsProtocolError(f"not a websocket upgrade: {request_line!r}")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    writer.write(response.encode("ascii"))
    await writer.drain()


def encode_text(payload: str) -> bytes:
    data = payload.encode("utf-8")
    n = len(data)
    if n < 126:
        header = bytes([0x81, n])
    elif n < 1 << 16:
        header = bytes([0x81, 126]) + n.to_bytes(2, "big")
    else:
        header = bytes([0x81, 127]) + n.to_bytes(8, "big")
    return header + data


def _encode_control(opcode: int, data: bytes = b"") -> bytes:
    return bytes([0x80 | opcode, len(data)]) + data


async def read_text(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter
) -> str | None:
    """Next text message, transparently answering pings; None on close."""
    message = bytearray()
    while True:
        try:
            head = await reader.readexactly(2)
        except (asyncio.IncompleteReadError, ConnectionResetError):
            return None
        fin = bool(head[0] & 0x80)
        opcode = head[0] & 0x0F
        masked = bool(head[1] & 0x80)
        length = head[1] & 0x7F
        if length == 126:
            length = int.from_bytes(await reader.readexactly(2), "big")
        elif length == 127:
            length = int.from_bytes(await reader.readexactly(8), "big")
        mask = await reader.readexactly(4) if masked else b""
        payload = await reader.readexactly(length) if length else b""
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 0x8:  # close
            writer.write(_encode_control(0x8))
            try:
                await writer.drain()
            except ConnectionResetError:
                pass
            return None
        if opcode == 0x9:  # ping
            writer.write(_encode_control(0xA, payload))
            await writer.drain()
            continue
        if opcode == 0xA:  # pong
            continue
        if opcode in (0x1, 0x0):
            message.extend(payload)
            if fin:
                return message.decode("utf-8")
            continue
        raise WsProtocolError(f"unsupported opcode {opcode}")
