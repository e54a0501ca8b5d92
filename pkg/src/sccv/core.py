"""Count-vector domain model.

A monitored process is observed as a stream of system calls.  This module
turns that stream into the fixed-size numeric objects the rest of the
package works with: per-interval count vectors, L1-normalized rows, and
fixed-length windows of consecutive rows.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger("sccv.core")

NS_PER_SEC = 1_000_000_000

# Number of out-of-order warnings actually logged before going quiet;
# the counter keeps counting either way.
_MAX_LOGGED_LATE_EVENTS = 5


class SyscallTableError(ValueError):
    """Raised for malformed or inconsistent syscall tables."""


class StreamOrderError(ValueError):
    """Raised when a vector stream violates its ordering contract."""


@dataclass(frozen=True)
class SyscallTable:
    """Ordered mapping between syscall names and dense indices 0..D-1.

    The last index (D-1) is reserved: unknown syscall names resolve to it
    instead of raising, so tables survive kernel version drift.
    """

    names: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.names) < 1:
            raise SyscallTableError("syscall table must have at least one entry")
        index = {}
        for i, name in enumerate(self.names):
            if not name:
                raise SyscallTableError(f"empty syscall name at index {i}")
            if name in index:
                raise SyscallTableError(f"duplicate syscall name {name!r}")
            index[name] = i
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def reserved_index(self) -> int:
        """Index that unknown syscall names map to."""
        return len(self.names) - 1

    def index_of(self, name: str) -> int:
        """Strict lookup; raises SyscallTableError for unknown names."""
        try:
            return self._index[name]
        except KeyError:
            raise SyscallTableError(f"unknown syscall name {name!r}") from None

    def resolve(self, name: str) -> int:
        """Lenient lookup; unknown names map to the reserved index."""
        return self._index.get(name, self.reserved_index)

    def name_of(self, index: int) -> str:
        return self.names[index]


def parse_syscall_table(text: str) -> SyscallTable:
    """Parse "index name" lines into a table.

    Blank lines and lines starting with '#' are ignored.  Indices must be a
    permutation of 0..D-1 and names must be unique.
    """
    entries: dict[int, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SyscallTableError(f"line {lineno}: expected 'index name', got {raw!r}")
        try:
            idx = int(parts[0])
        except ValueError:
            raise SyscallTableError(f"line {lineno}: non-numeric index {parts[0]!r}") from None
        if idx in entries:
            raise SyscallTableError(f"line {lineno}: duplicate index {idx}")
        entries[idx] = parts[1]
    if not entries:
        raise SyscallTableError("empty syscall table source")
    size = len(entries)
    if sorted(entries) != list(range(size)):
        missing = sorted(set(range(size)) - set(entries))
        raise SyscallTableError(f"indices are not a gap-free permutation of 0..{size - 1} "
                                f"(first problem near index {missing[0] if missing else max(entries)})")
    return SyscallTable(tuple(entries[i] for i in range(size)))


def load_syscall_table(source: str | Path | None = None) -> SyscallTable:
    """Load a table from a file path, raw text, or the builtin default.

    ``None`` loads the shipped 300-entry table.  A ``Path`` (or a string
    naming an existing file) is read as UTF-8; any other string is parsed
    directly as table text.
    """
    if source is None:
        return default_table()
    if isinstance(source, Path):
        return parse_syscall_table(source.read_text(encoding="utf-8"))
    if "\n" not in source and Path(source).is_file():
        return parse_syscall_table(Path(source).read_text(encoding="utf-8"))
    return parse_syscall_table(source)


_DEFAULT_TABLE: SyscallTable | None = None


def default_table() -> SyscallTable:
    """The shipped table: 299 x86-64 syscall names plus a reserved 'other'."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("sccv").joinpath(
            "data", "syscalls_default.tbl").read_text("utf-8")
        _DEFAULT_TABLE = parse_syscall_table(text)
    return _DEFAULT_TABLE


@dataclass(slots=True)
class TraceEvent:
    """One observed system call."""

    timestamp: int  # ns since epoch
    host_id: str
    pid: int
    declared_name: str  # the name the process presents about itself
    syscall: int  # index into the active SyscallTable


@dataclass
class CountVector:
    """Per-syscall call counts for one identity over one time interval."""

    counts: np.ndarray  # (D,) int64
    interval_start: int  # ns, epoch-aligned multiple of interval_len
    interval_len: int  # ns
    host_id: str
    pid: int
    declared_name: str

    @property
    def identity(self) -> tuple[str, int]:
        return (self.host_id, self.pid)

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CountVector):
            return NotImplemented
        return (self.interval_start == other.interval_start
                and self.interval_len == other.interval_len
                and self.host_id == other.host_id
                and self.pid == other.pid
                and self.declared_name == other.declared_name
                and np.array_equal(self.counts, other.counts))


class Aggregator:
    """Streaming aggregation of TraceEvents into per-interval CountVectors.

    State is independent per (host_id, pid).  Intervals are half-open
    [n*t, (n+1)*t) on the epoch grid.  An interval is emitted once the
    identity's newest timestamp has moved past its end by the late
    tolerance, so mildly out-of-order events still land in the right bin;
    events later than the tolerance are dropped and counted.
    """

    def __init__(self, t_ns: int, D: int, late_tolerance_ns: int | None = None):
        if t_ns <= 0:
            raise ValueError("interval length must be positive")
        self.t = int(t_ns)
        self.D = int(D)
        self.tolerance = 2 * self.t if late_tolerance_ns is None else int(late_tolerance_ns)
        self.late_dropped = 0
        self.events_binned = 0
        # identity -> (watermark, {interval_start: counts}, declared_name per open interval)
        self._state: dict[tuple[str, int], tuple[int, dict[int, np.ndarray], dict[int, str]]] = {}

    def add(self, event: TraceEvent) -> list[CountVector]:
        """Feed one event; returns any intervals closed by its arrival."""
        if event.timestamp < 0:
            raise ValueError("negative timestamp")
        if not 0 <= event.syscall < self.D:
            raise ValueError(f"syscall index {event.syscall} outside table of size {self.D}")
        key = (event.host_id, event.pid)
        state = self._state.get(key)
        if state is None:
            state = (event.timestamp, {}, {})
            self._state[key] = state
        watermark, buckets, names = state
        if event.timestamp < watermark - self.tolerance:
            self.late_dropped += 1
            if self.late_dropped <= _MAX_LOGGED_LATE_EVENTS:
                log.warning("dropping out-of-order event for %s/%d: %d ns behind watermark",
                            event.host_id, event.pid, watermark - event.timestamp)
            return []
        start = (event.timestamp // self.t) * self.t
        counts = buckets.get(start)
        if counts is None:
            counts = np.zeros(self.D, dtype=np.int64)
            buckets[start] = counts
        counts[event.syscall] += 1
        names[start] = event.declared_name
        self.events_binned += 1
        if event.timestamp > watermark:
            watermark = event.timestamp
            self._state[key] = (watermark, buckets, names)
        return self._close_ripe(key, watermark, buckets, names)

    def _close_ripe(self, key, watermark, buckets, names) -> list[CountVector]:
        ripe = sorted(s for s in buckets if s + self.t + self.tolerance <= watermark)
        out = []
        for start in ripe:
            out.append(CountVector(buckets.pop(start), start, self.t, key[0], key[1],
                                   names.pop(start)))
        return out

    def flush(self) -> list[CountVector]:
        """Close out every open interval (end of stream)."""
        out = []
        for key in sorted(self._state):
            _, buckets, names = self._state[key]
            for start in sorted(buckets):
                out.append(CountVector(buckets[start], start, self.t, key[0], key[1],
                                       names[start]))
        self._state.clear()
        return out


def aggregate(events: Iterable[TraceEvent], t_ns: int, table: SyscallTable,
              late_tolerance_ns: int | None = None) -> Iterator[CountVector]:
    """Aggregate an event stream into one CountVector per active interval.

    Only intervals containing at least one event are emitted; idle time
    produces nothing here (window assembly zero-fills gaps later).
    """
    agg = Aggregator(t_ns, table.size, late_tolerance_ns)
    for event in events:
        yield from agg.add(event)
    yield from agg.flush()


def normalize(v: CountVector | np.ndarray) -> np.ndarray:
    """L1-normalize one count vector to fractions summing to 1.

    An all-zero vector (degenerate idle interval) stays all-zero rather
    than being dropped, preserving time contiguity downstream.
    """
    counts = v.counts if isinstance(v, CountVector) else np.asarray(v)
    out = counts.astype(np.float64)
    total = out.sum()
    if total > 0:
        out /= total
    return out


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Row-wise L1 normalization of a (W, D) count matrix; zero rows stay zero."""
    rows = np.asarray(rows, dtype=np.float64)
    sums = rows.sum(axis=1, keepdims=True)
    return rows / np.where(sums > 0, sums, 1.0)


def rescale(vectors: Sequence[CountVector], k: int) -> list[CountVector]:
    """Re-bin consecutive base-interval vectors onto the coarser grid k*t.

    Each output is the elementwise sum of k consecutive inputs; a trailing
    remainder of fewer than k vectors is dropped.  Works on raw counts; any
    normalization happens after rescaling, never before.
    """
    if k < 1:
        raise ValueError(f"rescale factor must be >= 1, got {k}")
    vectors = list(vectors)
    if not vectors:
        return []
    first = vectors[0]
    for v in vectors[1:]:
        if v.identity != first.identity:
            raise ValueError(f"mixed identities in rescale stream: "
                             f"{first.identity} vs {v.identity}")
        if v.interval_len != first.interval_len:
            raise ValueError("mixed base intervals in rescale stream")
    if k == 1:
        return vectors
    out = []
    for i in range(0, len(vectors) - k + 1, k):
        group = vectors[i:i + k]
        counts = np.sum([g.counts for g in group], axis=0)
        out.append(CountVector(counts, group[0].interval_start, k * first.interval_len,
                               first.host_id, first.pid, group[-1].declared_name))
    return out


@dataclass
class NormalizedSequence:
    """W consecutive L1-normalized rows: one classification input.

    ``label`` is a class index during training and None for inference.
    ``scale`` is the interval multiplier k relative to the base interval.
    The identity/interval fields are provenance for detection; they default
    to empty for purely synthetic training data.
    """

    rows: np.ndarray  # (W, D) float64, each row sums to 1 or is all-zero
    label: int | None = None
    scale: int = 1
    host_id: str = ""
    pid: int = 0
    declared_name: str = ""
    interval_start: int = 0  # ns of first row
    interval_len: int = 0  # ns per row

    @property
    def window(self) -> int:
        return self.rows.shape[0]

    def validate(self, atol: float = 1e-9) -> None:
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ValueError("rows must be a (W, D) matrix with W >= 1")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        sums = self.rows.sum(axis=1)
        bad = ~(np.isclose(sums, 1.0, rtol=0.0, atol=atol) | (sums == 0.0))
        if bad.any():
            raise ValueError(f"row {int(np.argmax(bad))} sums to {sums[bad][0]!r}, "
                             "expected 1 or exactly 0")


class _WindowState:
    """Per-identity sliding-window assembly over a contiguous row timeline."""

    __slots__ = ("rows", "base", "next_emit", "appended", "start_ns", "declared_name")

    def __init__(self) -> None:
        self.rows: deque[np.ndarray] = deque()
        self.base = 0  # absolute index of rows[0]
        self.next_emit = 0  # absolute index of the next window start
        self.appended = 0
        self.start_ns = 0  # timestamp of absolute row 0
        self.declared_name = ""


def assemble_sequences(vectors: Iterable[CountVector], window: int, stride: int,
                       scale: int = 1) -> Iterator[NormalizedSequence]:
    """Slide fixed-length windows over per-identity vector streams.

    Rows are L1-normalized; missing intervals between observed vectors are
    filled with all-zero rows so every window covers contiguous time.
    Windows advance by ``stride`` rows; an incomplete trailing window is
    dropped.  Vectors of different identities may be interleaved but each
    identity's sub-stream must be time-ascending on a single interval grid.
    """
    if window < 1:
        raise ValueError("window length must be >= 1")
    if not 1 <= stride <= window:
        raise ValueError(f"stride must be in 1..window, got {stride}")
    states: dict[tuple[str, int], _WindowState] = {}
    t_by_identity: dict[tuple[str, int], int] = {}

    for v in vectors:
        key = v.identity
        st = states.get(key)
        if st is None:
            st = _WindowState()
            st.start_ns = v.interval_start
            states[key] = st
            t_by_identity[key] = v.interval_len
        t = t_by_identity[key]
        if v.interval_len != t:
            raise StreamOrderError(f"identity {key} changed interval length "
                                   f"{t} -> {v.interval_len}")
        offset_ns = v.interval_start - st.start_ns
        if offset_ns % t != 0:
            raise StreamOrderError(f"identity {key} vector at {v.interval_start} is not "
                                   f"on the {t} ns grid of its stream")
        idx = offset_ns // t
        if idx < st.appended:
            raise StreamOrderError(f"identity {key} vector stream is not time-ascending")
        zero = None
        while st.appended < idx:  # zero-fill the gap
            if zero is None:
                zero = np.zeros(v.counts.shape[0], dtype=np.float64)
            yield from _append_row(st, zero, key, v, t, window, stride, scale)
        st.declared_name = v.declared_name
        yield from _append_row(st, normalize(v), key, v, t, window, stride, scale)


def _append_row(st: _WindowState, row: np.ndarray, key: tuple[str, int], v: CountVector,
                t: int, window: int, stride: int, scale: int) -> Iterator[NormalizedSequence]:
    st.rows.append(row)
    st.appended += 1
    last = st.appended - 1
    while st.next_emit + window - 1 <= last:
        lo = st.next_emit - st.base
        mat = np.array(list(st.rows)[lo:lo + window])
        yield NormalizedSequence(
            rows=mat, label=None, scale=scale,
            host_id=key[0], pid=key[1], declared_name=st.declared_name,
            interval_start=st.start_ns + st.next_emit * t, interval_len=t)
        st.next_emit += stride
    while st.base < st.next_emit and st.rows:
        st.rows.popleft()
        st.base += 1
