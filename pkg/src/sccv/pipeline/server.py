"""Monitoring server: socket ingest, bounded queue, detection loop.

Thread layout: one acceptor, one reader per agent connection, one
consumer, plus an optional metrics HTTP thread.  Readers decode frames
(a malformed frame closes just that connection) and push decoded records
into the bounded drop-oldest queue; the single consumer owns the
DetectionEngine, so assembler state needs no locks and verdict order is
deterministic per identity.
"""
from __future__ import annotations

import logging
import socket
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..traceio import (RECORD_VERSION, RecordCodecError, _MAX_FRAME,
                       _MIN_FRAME, decode_record_sparse)
from .engine import DetectionEngine
from .queueing import BoundedQueue, Counters

log = logging.getLogger("sccv.pipeline.server")

DEFAULT_QUEUE_CAP = 65536
RECV_CHUNK = 1 << 20
CONSUMER_BATCH = 2048
IDLE_FLUSH_S = 0.05


class SccvServer:
    """Accepts agent record streams and runs live detection on them."""

    def __init__(self, engine: DetectionEngine, listen: tuple[str, int],
                 *, queue_cap: int = DEFAULT_QUEUE_CAP,
                 metrics_port: int | None = None,
                 on_verdict=None, on_alert=None,
                 record_sink=None):
        self.engine = engine
        self.counters: Counters = engine.counters
        self.queue = BoundedQueue(queue_cap)
        self._listen_addr = listen
        self._metrics_port = metrics_port
        self._on_verdict = on_verdict
        self._on_alert = on_alert
        self._record_sink = record_sink  # file-like; raw frames appended
        self._sink_lock = threading.Lock()
        self._lsock: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._conns: list[socket.socket] = []
        self._conn_lock = threading.Lock()
        self._stopping = threading.Event()
        self._metrics_srv: ThreadingHTTPServer | None = None
        self.port: int | None = None
        self.metrics_port: int | None = None

    def start(self) -> None:
        if self._lsock is not None:
            raise RuntimeError("server already started")
        self._lsock = socket.create_server(self._listen_addr, backlog=64)
        self.port = self._lsock.getsockname()[1]
        acceptor = threading.Thread(target=self._accept_loop,
                                    name="sccv-accept", daemon=True)
        consumer = threading.Thread(target=self._consume_loop,
                                    name="sccv-consume", daemon=True)
        self._threads += [acceptor, consumer]
        if self._metrics_port is not None:
            self._start_metrics()
        acceptor.start()
        consumer.start()
        log.info("listening on %s:%d", self._listen_addr[0], self.port)

    def _start_metrics(self) -> None:
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server API)
                body = server.render_metrics().encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/plain; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        addr = (self._listen_addr[0], self._metrics_port)
        self._metrics_srv = ThreadingHTTPServer(addr, Handler)
        self.metrics_port = self._metrics_srv.server_address[1]
        t = threading.Thread(target=self._metrics_srv.serve_forever,
                             name="sccv-metrics", daemon=True)
        self._threads.append(t)
        t.start()

    def render_metrics(self) -> str:
        """Counter lines, one 'name value' per line."""
        snap = self.counters.snapshot()
        snap["queue_depth"] = len(self.queue)
        snap["queue_dropped"] = self.queue.dropped
        return "".join(f"{k} {v}\n" for k, v in sorted(snap.items()))

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, addr = self._lsock.accept()
            except OSError:
                return  # listener closed
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._conn_lock:
                self._conns.append(conn)
            self.counters.inc("connections")
            t = threading.Thread(target=self._reader_loop, args=(conn, addr),
                                 name="sccv-reader", daemon=True)
            self._threads.append(t)
            t.start()

    def _reader_loop(self, conn: socket.socket, addr) -> None:
        """Version handshake, then frame scan/decode into the queue."""
        queue = self.queue
        counters = self.counters
        D = self.engine.D
        sink = self._record_sink
        try:
            head = conn.recv(1)
            if len(head) != 1 or head[0] != RECORD_VERSION:
                counters.inc("handshake_rejected")
                return
            buf = b""
            while not self._stopping.is_set():
                chunk = conn.recv(RECV_CHUNK)
                if not chunk:
                    return
                counters.inc("bytes_in", len(chunk))
                buf = buf + chunk if buf else chunk
                pos = 0
                limit = len(buf)
                batch = []
                while limit - pos >= 4:
                    (frame_len,) = struct.unpack_from("<I", buf, pos)
                    if not _MIN_FRAME <= frame_len <= _MAX_FRAME:
                        raise RecordCodecError(
                            f"implausible frame length {frame_len}")
                    if limit - pos < frame_len:
                        break
                    frame = buf[pos:pos + frame_len]
                    batch.append(decode_record_sparse(frame, D))
                    if sink is not None:
                        with self._sink_lock:
                            sink.write(frame)
                    pos += frame_len
                if batch:
                    counters.inc("records_received", len(batch))
                    queue.put_many(batch)
                buf = buf[pos:]
        except RecordCodecError as exc:
            counters.inc("records_bad")
            log.warning("closing %s: bad frame: %s", addr, exc)
        except OSError:
            pass
        finally:
            conn.close()
            with self._conn_lock:
                if conn in self._conns:
                    self._conns.remove(conn)

    def _consume_loop(self) -> None:
        engine = self.engine
        queue = self.queue
        while True:
            items = queue.get_many(CONSUMER_BATCH, timeout=IDLE_FLUSH_S)
            if not items:
                self._emit(*engine.flush())
                if queue.closed and len(queue) == 0:
                    return
                continue
            self._emit(*engine.feed_many(items))

    def _emit(self, verdicts, alerts) -> None:
        if self._on_verdict is not None:
            for v in verdicts:
                self._on_verdict(v)
        if self._on_alert is not None:
            for a in alerts:
                self._on_alert(a)

    def stop(self, timeout: float = 10.0) -> None:
        """Stop accepting, drain the queue, flush the engine."""
        self._stopping.set()
        if self._lsock is not None:
            try:
                # closing alone does not wake a thread blocked in accept()
                self._lsock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._lsock.close()
        with self._conn_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        self.queue.close()
        if self._metrics_srv is not None:
            self._metrics_srv.shutdown()
        for t in list(self._threads):
            t.join(timeout)
        self._emit(*self.engine.flush())
