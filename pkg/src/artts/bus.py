"""Line-oriented TCP register protocol over a single engine, plus a
browser-reachable WebSocket bridge speaking the identical protocol.

Wire grammar (exact, LF-terminated ASCII)::

    CMD  := "READ" SP PT | "WRITE" SP PT SP BIT | "STEP" SP UINT
          | "RUN" SP UINT | "SNAPSHOT" | "FAULT" SP ("A"|"B") SP CODE
          | "RESETF" | "RESET" | "SUB" SP PT ("," PT)*
          | "MODE" SP ("stepped"|"realtime")
    RESP := "OK" (SP PAYLOAD)? | "ERR" SP CODE SP QSTRING
    EVT  := "EVT" SP UINT SP PT SP BIT

Every client command gets exactly one OK/ERR response (SNAPSHOT's point
dump and terminating "." ride behind its OK).  All commands from all
clients funnel through one executor thread, giving a total order over
engine operations; in realtime mode the executor also free-runs scans at
best-effort wall pacing and STEP/RUN are rejected.  Subscribers receive an
EVT per subscribed point transition per scan, ordered by point-map
declaration order; a subscriber that cannot drain its buffer is
disconnected rather than allowed to stall the engine.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import socket
import threading
import time
from pathlib import Path

from .engine import (
    BadValueError,
    Engine,
    FaultCode,
    NotAnInputError,
    UnknownPointError,
)
from .points import Chain
from .station import station_to_dict

MAX_LINE_BYTES = 1024
CLIENT_BUFFER_LINES = 1024
WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class BusError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class _Client:
    """One connected bus client (TCP or bridge session)."""

    _counter = 0

    def __init__(self, server: "BusServer", describe: str, conn: socket.socket | None = None):
        _Client._counter += 1
        self.id = _Client._counter
        self.describe = describe
        self.server = server
        self.conn = conn
        self.subscriptions: list[str] = []  # point-map order maintained on SUB
        self.last_values: dict[str, int] = {}
        self.outbox: queue.Queue[str | None] = queue.Queue(maxsize=CLIENT_BUFFER_LINES)
        self.closed = threading.Event()

    def enqueue(self, line: str) -> None:
        if self.closed.is_set():
            return
        try:
            self.outbox.put_nowait(line)
        except queue.Full:
            # slow subscriber: cut it loose rather than stall the engine
            self.close()

    def close(self) -> None:
        if not self.closed.is_set():
            self.closed.set()
            try:
                self.outbox.put_nowait(None)
            except queue.Full:
                # make room so the writer still receives its sentinel
                try:
                    self.outbox.get_nowait()
                except queue.Empty:
                    pass
                try:
                    self.outbox.put_nowait(None)
                except queue.Full:
                    pass
            if self.conn is not None:
                # a bare close() does not unblock a thread inside recv()
                try:
                    self.conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass


class BusServer:
    """Expose one engine over TCP and (optionally) a WebSocket bridge."""

    def __init__(
        self,
        engine: Engine,
        tcp_address: tuple[str, int] = ("127.0.0.1", 7502),
        bridge_address: tuple[str, int] | None = None,
        *,
        mode: str = "stepped",
        hmi_dir: str | Path | None = None,
    ):
        if mode not in ("stepped", "realtime"):
            raise ValueError(f"unknown mode {mode!r}")
        self.engine = engine
        self.mode = mode
        self.hmi_dir = Path(hmi_dir) if hmi_dir else None
        self._tcp_address = tcp_address
        self._bridge_address = bridge_address
        self._commands: queue.Queue = queue.Queue()
        self._clients: dict[int, _Client] = {}
        self._clients_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._running = threading.Event()
        self._tcp_sock: socket.socket | None = None
        self._bridge_sock: socket.socket | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._running.set()
        self._tcp_sock = socket.create_server(self._tcp_address)
        self._spawn(self._accept_loop, self._tcp_sock, self._handle_tcp_client)
        if self._bridge_address is not None:
            self._bridge_sock = socket.create_server(self._bridge_address)
            self._spawn(self._accept_loop, self._bridge_sock, self._handle_http_client)
        self._spawn(self._executor_loop)

    def stop(self) -> None:
        self._running.clear()
        self._commands.put(None)
        for sock in (self._tcp_sock, self._bridge_sock):
            if sock is not None:
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    sock.close()
                except OSError:
                    pass
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            client.close()
        for thread in self._threads:
            thread.join(timeout=2)

    @property
    def tcp_port(self) -> int:
        assert self._tcp_sock is not None
        return self._tcp_sock.getsockname()[1]

    @property
    def bridge_port(self) -> int:
        assert self._bridge_sock is not None
        return self._bridge_sock.getsockname()[1]

    def _spawn(self, target, *args) -> None:
        # prune finished per-connection threads so a long-lived server
        # does not accumulate them
        self._threads = [t for t in self._threads if t.is_alive()]
        thread = threading.Thread(target=target, args=args, daemon=True)
        thread.start()
        self._threads.append(thread)

    # -- accept/reader side --------------------------------------------------

    def _accept_loop(self, listener: socket.socket, handler) -> None:
        while self._running.is_set():
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            self._spawn(handler, conn)

    def _register(self, client: _Client) -> None:
        with self._clients_lock:
            self._clients[client.id] = client

    def _unregister(self, client: _Client) -> None:
        client.close()
        with self._clients_lock:
            self._clients.pop(client.id, None)

    def _handle_tcp_client(self, conn: socket.socket) -> None:
        client = _Client(self, "tcp", conn)
        self._register(client)

        def writer() -> None:
            while True:
                line = client.outbox.get()
                if line is None:
                    break
                try:
                    conn.sendall((line + "\n").encode("ascii"))
                except OSError:
                    break
            try:
                conn.close()
            except OSError:
                pass

        self._spawn(writer)
        try:
            self._read_lines(conn, client)
        finally:
            self._unregister(client)

    def _read_lines(self, conn: socket.socket, client: _Client) -> None:
        buffer = b""
        overlong = False
        while self._running.is_set() and not client.closed.is_set():
            try:
                chunk = conn.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while True:
                cut = buffer.find(b"\n")
                if cut < 0:
                    if len(buffer) > MAX_LINE_BYTES:
                        overlong = True
                        buffer = b""
                    break
                raw, buffer = buffer[:cut], buffer[cut + 1 :]
                if overlong or len(raw) > MAX_LINE_BYTES:
                    overlong = False
                    client.enqueue('ERR cap "line too long"')
                    continue
                line = raw.decode("ascii", errors="replace").rstrip("\r")
                if line:
                    self._commands.put((client, line))

    # -- executor --------------------------------------------------------------

    def _executor_loop(self) -> None:
        period_s = self.engine.scan_period_ms / 1000.0
        next_tick = time.monotonic() + period_s
        while self._running.is_set():
            if self.mode == "realtime":
                timeout = max(0.0, next_tick - time.monotonic())
            else:
                timeout = None
            try:
                item = self._commands.get(timeout=timeout)
            except queue.Empty:
                # realtime tick; resync rather than trying to catch up
                self._scan_and_publish()
                next_tick = time.monotonic() + period_s
                continue
            if item is None:
                return
            client, line = item
            if client.closed.is_set():
                continue
            try:
                self._dispatch(client, line)
            except BusError as err:
                client.enqueue(f'ERR {err.code} "{err.message}"')

    def _scan_and_publish(self) -> int:
        record = self.engine.step()
        values = {**record.inputs, **record.outputs}
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            for point in client.subscriptions:
                value = values[point]
                if client.last_values.get(point) != value:
                    client.last_values[point] = value
                    client.enqueue(f"EVT {record.time_ms} {point} {value}")
        return record.time_ms

    def _publish_reset(self) -> None:
        engine = self.engine
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            for point in client.subscriptions:
                value = engine.read_point(point)
                if client.last_values.get(point) != value:
                    client.last_values[point] = value
                    client.enqueue(f"EVT {engine.time_ms} {point} {value}")

    # -- command dispatch ---------------------------------------------------------

    def _dispatch(self, client: _Client, line: str) -> None:
        parts = line.split(" ")
        verb = parts[0]
        args = parts[1:]
        engine = self.engine
        try:
            if verb == "READ":
                self._arity(args, 1)
                client.enqueue(f"OK {engine.read_point(args[0])}")
            elif verb == "WRITE":
                self._arity(args, 2)
                engine.write_point(args[0], self._bit(args[1]))
                client.enqueue("OK")
            elif verb == "STEP":
                self._arity(args, 1)
                self._require_stepped()
                count = self._uint(args[0])
                last = engine.time_ms
                for _ in range(count):
                    last = self._scan_and_publish()
                client.enqueue(f"OK {last}")
            elif verb == "RUN":
                self._arity(args, 1)
                self._require_stepped()
                duration = self._uint(args[0])
                if duration % engine.scan_period_ms != 0:
                    raise BadValueError(
                        f"duration {duration} ms is not a multiple of the "
                        f"{engine.scan_period_ms} ms scan period"
                    )
                last = engine.time_ms
                for _ in range(duration // engine.scan_period_ms):
                    last = self._scan_and_publish()
                client.enqueue(f"OK {last}")
            elif verb == "SNAPSHOT":
                self._arity(args, 0)
                client.enqueue("OK")
                for point in engine.station.points:
                    client.enqueue(f"{point.name} {engine.read_point(point.name)}")
                client.enqueue(".")
            elif verb == "FAULT":
                self._arity(args, 2)
                chain = {"A": Chain.A, "B": Chain.B}.get(args[0])
                if chain is None:
                    raise BadValueError("chain must be A or B")
                code = next((c for c in FaultCode if c.value == args[1]), None)
                if code is None:
                    raise BadValueError(f"unknown fault code {args[1]}")
                engine.inject_fault(chain, code)
                client.enqueue("OK")
            elif verb == "RESETF":
                self._arity(args, 0)
                engine.reset_faults()
                client.enqueue("OK")
            elif verb == "RESET":
                self._arity(args, 0)
                engine.reset()
                self._publish_reset()
                client.enqueue("OK")
            elif verb == "SUB":
                self._arity(args, 1)
                self._subscribe(client, args[0])
                client.enqueue("OK")
            elif verb == "MODE":
                self._arity(args, 1)
                if args[0] not in ("stepped", "realtime"):
                    raise BadValueError("mode must be stepped or realtime")
                self.mode = args[0]
                client.enqueue("OK")
            else:
                raise BusError("unknown-cmd", f"unknown command {verb}")
        except UnknownPointError as err:
            raise BusError("unknown-point", str(err)) from err
        except NotAnInputError as err:
            raise BusError("not-input", str(err)) from err
        except BadValueError as err:
            raise BusError("bad-value", str(err)) from err

    def _subscribe(self, client: _Client, point_list: str) -> None:
        names = point_list.split(",")
        for name in names:
            self.engine.read_point(name)  # raises UnknownPointError for bad names
        order = {p.name: i for i, p in enumerate(self.engine.station.points)}
        for name in names:
            if name not in client.subscriptions:
                client.subscriptions.append(name)
                client.last_values[name] = self.engine.read_point(name)
        client.subscriptions.sort(key=order.__getitem__)

    @staticmethod
    def _arity(args: list[str], count: int) -> None:
        if len(args) != count or any(not a for a in args):
            raise BadValueError(f"expected {count} argument(s)")

    @staticmethod
    def _bit(token: str) -> int:
        if token not in ("0", "1"):
            raise BadValueError(f"bit must be 0 or 1, got {token!r}")
        return int(token)

    @staticmethod
    def _uint(token: str) -> int:
        if not token.isdigit():
            raise BadValueError(f"expected unsigned integer, got {token!r}")
        return int(token)

    def _require_stepped(self) -> None:
        if self.mode != "stepped":
            raise BusError("mode", "stepped commands rejected in realtime")

    # -- the browser bridge -----------------------------------------------------

    def _handle_http_client(self, conn: socket.socket) -> None:
        try:
            request = self._read_http_request(conn)
        except OSError:
            return
        if request is None:
            try:
                conn.close()
            except OSError:
                pass
            return
        method, path, headers = request
        if headers.get("upgrade", "").lower() == "websocket":
            self._serve_websocket(conn, headers)
        elif method == "GET":
            self._serve_static(conn, path)
        elif method == "OPTIONS":
            self._http_response(conn, 204, b"")
        else:
            self._http_response(conn, 405, b"method not allowed")

    @staticmethod
    def _read_http_request(conn: socket.socket):
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(4096)
            if not chunk:
                return None
            data += chunk
            if len(data) > 65536:
                return None
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head.split("\r\n")
        try:
            method, path, _ = lines[0].split(" ", 2)
        except ValueError:
            return None
        headers = {}
        for line in lines[1:]:
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()
        return method, path, headers

    def _http_response(
        self, conn: socket.socket, status: int, body: bytes, content_type: str = "text/plain"
    ) -> None:
        reason = {200: "OK", 204: "No Content", 404: "Not Found", 405: "Method Not Allowed"}.get(
            status, "Error"
        )
        # permissive CORS: the bridge is a loopback development tool and the
        # HMI may be served from a separate dev server origin
        head = (
            f"HTTP/1.1 {status} {reason}\r\n"
            f"Content-Type: {content_type}\r\n"
            f"Content-Length: {len(body)}\r\n"
            "Access-Control-Allow-Origin: *\r\n"
            "Access-Control-Allow-Methods: GET, OPTIONS\r\n"
            "Connection: close\r\n\r\n"
        )
        try:
            conn.sendall(head.encode("latin-1") + body)
        finally:
            try:
                conn.close()
            except OSError:
                pass

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript; charset=utf-8",
        ".css": "text/css; charset=utf-8",
        ".json": "application/json",
        ".svg": "image/svg+xml",
        ".png": "image/png",
    }

    def _serve_static(self, conn: socket.socket, path: str) -> None:
        path = path.split("?", 1)[0]
        if path == "/station.json":
            body = json.dumps(station_to_dict(self.engine.station)).encode()
            self._http_response(conn, 200, body, "application/json")
            return
        if self.hmi_dir is None:
            self._http_response(conn, 404, b"no HMI assets configured")
            return
        name = path.lstrip("/") or "index.html"
        target = (self.hmi_dir / name).resolve()
        if not str(target).startswith(str(self.hmi_dir.resolve())) or not target.is_file():
            self._http_response(conn, 404, b"not found")
            return
        content_type = self._CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._http_response(conn, 200, target.read_bytes(), content_type)

    def _serve_websocket(self, conn: socket.socket, headers: dict[str, str]) -> None:
        key = headers.get("sec-websocket-key")
        if not key:
            self._http_response(conn, 404, b"missing websocket key")
            return
        accept = base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        handshake = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
        )
        try:
            conn.sendall(handshake.encode("latin-1"))
        except OSError:
            return

        client = _Client(self, "bridge", conn)
        self._register(client)

        def writer() -> None:
            while True:
                line = client.outbox.get()
                if line is None:
                    break
                try:
                    conn.sendall(_ws_frame(line))
                except OSError:
                    break
            try:
                conn.close()
            except OSError:
                pass

        self._spawn(writer)
        try:
            for message in _ws_messages(conn):
                for line in message.split("\n"):
                    line = line.strip("\r")
                    if line:
                        self._commands.put((client, line))
        except OSError:
            pass
        finally:
            self._unregister(client)


# -- minimal RFC 6455 framing ---------------------------------------------------


def _ws_frame(text: str, opcode: int = 0x1) -> bytes:
    payload = text.encode("utf-8")
    length = len(payload)
    head = bytes([0x80 | opcode])
    if length < 126:
        head += bytes([length])
    elif length < 65536:
        head += bytes([126]) + length.to_bytes(2, "big")
    else:
        head += bytes([127]) + length.to_bytes(8, "big")
    return head + payload


def _recv_exact(conn: socket.socket, count: int) -> bytes:
    data = b""
    while len(data) < count:
        chunk = conn.recv(count - len(data))
        if not chunk:
            raise OSError("websocket peer closed")
        data += chunk
    return data


def _ws_messages(conn: socket.socket):
    """Yield complete text messages; handles ping/pong and close."""
    while True:
        header = _recv_exact(conn, 2)
        opcode = header[0] & 0x0F
        masked = header[1] & 0x80
        length = header[1] & 0x7F
        if length == 126:
            length = int.from_bytes(_recv_exact(conn, 2), "big")
        elif length == 127:
            length = int.from_bytes(_recv_exact(conn, 8), "big")
        mask = _recv_exact(conn, 4) if masked else b"\x00\x00\x00\x00"
        payload = _recv_exact(conn, length) if length else b""
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 0x8:  # close
            try:
                conn.sendall(_ws_frame("", opcode=0x8))
            except OSError:
                pass
            return
        if opcode == 0x9:  # ping
            conn.sendall(_ws_frame(payload.decode("utf-8", "replace"), opcode=0xA))
            continue
        if opcode in (0x1, 0x2):
            yield payload.decode("utf-8", errors="replace")


def serve(
    engine: Engine,
    tcp_address: tuple[str, int] = ("127.0.0.1", 7502),
    bridge_address: tuple[str, int] | None = ("127.0.0.1", 7503),
    *,
    mode: str = "stepped",
    hmi_dir: str | Path | None = None,
) -> BusServer:
    """Start serving the engine; returns the running server handle."""
    server = BusServer(engine, tcp_address, bridge_address, mode=mode, hmi_dir=hmi_dir)
    server.start()
    return server
