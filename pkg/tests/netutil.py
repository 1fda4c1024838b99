"""Tiny line-protocol and WebSocket clients for exercising the bus in tests."""

from __future__ import annotations

import base64
import os
import socket

from artts.bus import _ws_frame, _ws_messages


class LineClient:
    def __init__(self, port: int, host: str = "127.0.0.1", timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buffer = b""

    def send(self, line: str) -> None:
        self.sock.sendall((line + "\n").encode())

    def send_raw(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv_line(self) -> str:
        while b"\n" not in self._buffer:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise OSError("server closed connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode()

    def command(self, line: str) -> str:
        self.send(line)
        return self.recv_line()

    def close(self) -> None:
        self.sock.close()


class WsClient:
    """Minimal RFC 6455 client: masked frames out, server frames in."""

    def __init__(self, port: int, path: str = "/bus", host: str = "127.0.0.1", timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode()
        request = (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {host}:{port}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(request.encode())
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        assert b"101" in response.split(b"\r\n", 1)[0], response
        self._messages = _ws_messages(self.sock)
        self._lines: list[str] = []

    def send(self, line: str) -> None:
        frame = bytearray(_ws_frame(line))
        frame[1] |= 0x80  # set mask bit
        mask = os.urandom(4)
        payload = line.encode()
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        head = frame[: len(frame) - len(payload)]
        self.sock.sendall(bytes(head) + mask + masked)

    def recv_line(self) -> str:
        while not self._lines:
            message = next(self._messages)
            self._lines.extend(l for l in message.split("\n") if l)
        return self._lines.pop(0)

    def command(self, line: str) -> str:
        self.send(line)
        return self.recv_line()

    def close(self) -> None:
        self.sock.close()
