"""Per-channel byte transport: in-memory queue pairs and one-TCP-per-channel.

Every channel delivers whole fixed-width cells in FIFO order.  The receiver
consumes channels in lockstep: one cell per channel per superblock round,
decoy channels included, so buffers stay bounded and offsets stay aligned.
"""
from __future__ import annotations

import queue
import socket

from .errors import (
    BadWidth,
    BindFailed,
    Closed,
    ConnectFailed,
    EndOfStream,
    Timeout,
)

QUEUE_CAPACITY = 1024
_CLOSE = None  # queue sentinel


class MemoryEndpoint:
    """One direction-pair of bounded queues; the loopback backend."""

    def __init__(self, channel: int, cell_width: int, send_q, recv_q):
        self.channel = channel
        self.cell_width = cell_width
        self._send_q = send_q
        self._recv_q = recv_q

    def send_cell(self, cell: bytes) -> None:
        if len(cell) != self.cell_width:
            raise BadWidth(f"cell is {len(cell)} bytes, channel wants {self.cell_width}")
        self._send_q.put(bytes(cell))

    def recv_cell(self) -> bytes:
        item = self._recv_q.get()
        if item is _CLOSE:
            self._recv_q.put(_CLOSE)  # keep the sentinel for later reads
            raise Closed(f"channel {self.channel} closed")
        return item

    def close(self) -> None:
        self._send_q.put(_CLOSE)


class TcpEndpoint:
    """One TCP connection carrying raw fixed-width cells, no framing bytes."""

    def __init__(self, channel: int, cell_width: int, sock: socket.socket):
        self.channel = channel
        self.cell_width = cell_width
        self._sock = sock
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass  # non-TCP stream sockets (tests) have no Nagle to disable

    def send_cell(self, cell: bytes) -> None:
        if len(cell) != self.cell_width:
            raise BadWidth(f"cell is {len(cell)} bytes, channel wants {self.cell_width}")
        try:
            self._sock.sendall(cell)
        except OSError as exc:
            raise Closed(f"channel {self.channel}: {exc}") from exc

    def recv_cell(self) -> bytes:
        # a cell may arrive split across TCP segments; reassemble
        buf = bytearray()
        while len(buf) < self.cell_width:
            try:
                chunk = self._sock.recv(self.cell_width - len(buf))
            except socket.timeout as exc:
                raise Timeout(f"channel {self.channel} read timed out") from exc
            except OSError as exc:
                raise Closed(f"channel {self.channel}: {exc}") from exc
            if not chunk:
                raise Closed(f"channel {self.channel} closed")
            buf += chunk
        return bytes(buf)

    def close(self) -> None:
        # graceful: peer sees EOF once in-flight cells are drained
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


class TransportBundle:
    """Exactly A endpoints, indexed by channel id."""

    def __init__(self, endpoints):
        self.endpoints = list(endpoints)
        for c, ep in enumerate(self.endpoints):
            if ep.channel != c:
                raise ValueError("endpoints must be ordered by channel id")

    def __len__(self) -> int:
        return len(self.endpoints)

    def send_cell(self, channel: int, cell: bytes) -> None:
        self.endpoints[channel].send_cell(cell)

    def recv_cell(self, channel: int) -> bytes:
        return self.endpoints[channel].recv_cell()

    def broadcast_superblock(self, cells) -> None:
        """Send one cell on every channel; cells[c] goes to channel c."""
        if len(cells) != len(self.endpoints):
            raise BadWidth(f"{len(cells)} cells for {len(self.endpoints)} channels")
        for ep, cell in zip(self.endpoints, cells):
            ep.send_cell(cell)

    def gather_superblock(self, selected) -> dict[int, bytes]:
        """Read one cell from every channel; return the selected ones.

        Non-selected channels are drained one cell each so streams stay
        aligned.  Output is keyed and ordered by channel id regardless of
        arrival order.  Raises EndOfStream when the round opens on an
        already-closed channel (clean end of transmission), Closed when a
        channel dies mid-round.
        """
        wanted = set(selected)
        cells: dict[int, bytes] = {}
        consumed = 0
        for ep in self.endpoints:
            try:
                cell = ep.recv_cell()
            except Closed:
                if consumed == 0:
                    raise EndOfStream("all channels drained")
                raise
            consumed += 1
            if ep.channel in wanted:
                cells[ep.channel] = cell
        missing = wanted - set(cells)
        if missing:
            raise Closed(f"no endpoints for selected channels {sorted(missing)}")
        return cells

    def close(self) -> None:
        for ep in self.endpoints:
            ep.close()


def open_memory_pair(census: int, cell_widths) -> tuple[TransportBundle, TransportBundle]:
    """Connected (sender, receiver) bundles backed by bounded queues."""
    a_side = []
    b_side = []
    for c in range(census):
        fwd: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
        rev: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
        a_side.append(MemoryEndpoint(c, cell_widths[c], fwd, rev))
        b_side.append(MemoryEndpoint(c, cell_widths[c], rev, fwd))
    return TransportBundle(a_side), TransportBundle(b_side)


def listen_bundle(
    census: int,
    cell_widths,
    port_base: int,
    host: str = "127.0.0.1",
    timeout: float | None = 30.0,
) -> TransportBundle:
    """Bind ports port_base..port_base+A-1 and accept one connection each.

    Connection order is channel id order: the peer connects to consecutive
    ports in sequence.
    """
    listeners = []
    try:
        for c in range(census):
            srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                srv.bind((host, port_base + c))
            except OSError as exc:
                srv.close()
                raise BindFailed(f"port {port_base + c}: {exc}") from exc
            srv.listen(1)
            srv.settimeout(timeout)
            listeners.append(srv)
        endpoints = []
        for c, srv in enumerate(listeners):
            try:
                conn, _ = srv.accept()
            except socket.timeout as exc:
                raise Timeout(f"no peer on port {port_base + c}") from exc
            endpoints.append(TcpEndpoint(c, cell_widths[c], conn))
        return TransportBundle(endpoints)
    finally:
        for srv in listeners:
            srv.close()


def connect_bundle(
    census: int,
    cell_widths,
    host: str,
    port_base: int,
    timeout: float = 30.0,
    retry_interval: float = 0.1,
) -> TransportBundle:
    """Connect to a listening bundle, channel id order, retrying briefly."""
    import time

    endpoints = []
    for c in range(census):
        deadline = time.monotonic() + timeout
        while True:
            try:
                sock = socket.create_connection(
                    (host, port_base + c), timeout=timeout
                )
                break
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise ConnectFailed(f"port {port_base + c}: {exc}") from exc
                time.sleep(retry_interval)
        endpoints.append(TcpEndpoint(c, cell_widths[c], sock))
    return TransportBundle(endpoints)
