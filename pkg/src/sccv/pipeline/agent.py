"""Endpoint agent: trace source -> aggregated Records -> server socket.

The agent emits at most one Record per identity per interval regardless
of how busy the host is, so its network volume has a fixed upper bound.
On connection loss it keeps a bounded buffer (sized in records, meant to
cover roughly one flush period) and reconnects with exponential backoff;
a Record leaves the buffer only after its bytes were handed to the
kernel, and a half-delivered frame is discarded by the server's scanner,
so reconnecting never duplicates an interval.
"""
from __future__ import annotations

import logging
import socket
import sys
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from ..core import Aggregator, SyscallTable, TraceEvent
from ..traceio import RECORD_VERSION, encode_record, read_trace
from .queueing import Counters

log = logging.getLogger("sccv.pipeline.agent")


class AgentError(RuntimeError):
    """Unrecoverable agent failure (server unreachable past max retries)."""


@dataclass
class AgentConfig:
    """What to read, how to bucket it, and where to send it."""

    source: object  # path, "-" for stdin, or an iterable of TraceEvents
    server: tuple[str, int]
    interval_ns: int = 1_000_000_000
    flush_period_ns: int = 5_000_000_000
    host_id: str | None = None  # override the trace's host field
    buffer_records: int = 8192
    max_retries: int = 6
    backoff_s: float = 0.2

    def __post_init__(self) -> None:
        if self.interval_ns < 1:
            raise ValueError("interval_ns must be >= 1")
        if self.flush_period_ns < self.interval_ns:
            raise ValueError("flush period must be >= interval")
        if self.buffer_records < 1:
            raise ValueError("buffer_records must be >= 1")


@dataclass
class AgentStats:
    records_sent: int = 0
    records_dropped: int = 0
    reconnects: int = 0
    events_read: int = 0


class _Connection:
    """Socket with version handshake and exponential-backoff reconnect."""

    def __init__(self, server: tuple[str, int], max_retries: int,
                 backoff_s: float, stats: AgentStats):
        self.server = server
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.stats = stats
        self.sock: socket.socket | None = None

    def connect(self, first: bool = True) -> None:
        delay = self.backoff_s
        for attempt in range(self.max_retries + 1):
            try:
                sock = socket.create_connection(self.server, timeout=10.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.sendall(bytes([RECORD_VERSION]))
                self.sock = sock
                if not first:
                    self.stats.reconnects += 1
                return
            except OSError as exc:
                last = exc
                if attempt < self.max_retries:
                    log.warning("connect to %s:%d failed (%s), retry in %.1fs",
                                self.server[0], self.server[1], exc, delay)
                    time.sleep(delay)
                    delay *= 2
        raise AgentError(f"server {self.server[0]}:{self.server[1]} unreachable "
                         f"after {self.max_retries + 1} attempts: {last}")

    def send(self, frame: bytes) -> None:
        if self.sock is None:
            self.connect(first=False)
        while True:
            try:
                self.sock.sendall(frame)
                return
            except OSError:
                self.close()
                self.connect(first=False)

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
            self.sock = None


def _events_from(source, table: SyscallTable):
    if source == "-":
        return read_trace(sys.stdin, table)
    if isinstance(source, (str, Path)):
        return read_trace(source, table)
    return iter(source)


def agent_run(config: AgentConfig, table: SyscallTable, *,
              stop=None, counters: Counters | None = None) -> AgentStats:
    """Stream the source through aggregation to the server; returns stats.

    Raises AgentError when the server stays unreachable past the retry
    budget.  ``stop`` is an optional threading.Event for early shutdown.
    """
    stats = AgentStats()
    counters = counters if counters is not None else Counters()
    agg = Aggregator(config.interval_ns, table.size)
    pending: deque[bytes] = deque()
    conn = _Connection(config.server, config.max_retries, config.backoff_s,
                       stats)
    conn.connect(first=True)

    def buffer_frame(frame: bytes) -> None:
        if len(pending) >= config.buffer_records:
            pending.popleft()
            stats.records_dropped += 1
            counters.inc("agent_buffer_dropped")
        pending.append(frame)

    def drain() -> None:
        while pending:
            conn.send(pending[0])
            pending.popleft()
            stats.records_sent += 1
            counters.inc("agent_records_sent")

    try:
        for event in _events_from(config.source, table):
            if stop is not None and stop.is_set():
                break
            if config.host_id is not None and event.host_id != config.host_id:
                event = TraceEvent(event.timestamp, config.host_id, event.pid,
                                   event.declared_name, event.syscall)
            stats.events_read += 1
            for vector in agg.add(event):
                buffer_frame(encode_record(vector))
            drain()
        for vector in agg.flush():
            buffer_frame(encode_record(vector))
        drain()
    finally:
        conn.close()
    return stats
