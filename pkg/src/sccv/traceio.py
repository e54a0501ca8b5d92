"""Trace-file parsing and the count-vector wire codec.

Trace files are tab-separated text, one system call per line:

    timestamp_ns<TAB>host_id<TAB>pid<TAB>declared_name<TAB>syscall_name

A Record is the wire unit: one count vector plus identity and interval
metadata, encoded as a little-endian length-prefixed frame:

    u32  frame_len        total frame size in bytes, including these 4 bytes
    u8   version          currently 1
    u8   host_len,  host_id bytes (UTF-8, <= 255)
    u8   name_len,  declared_name bytes (UTF-8, <= 255)
    u32  pid
    u64  interval_start   ns
    u64  interval_len     ns
    u16  pair_count
    pair_count * (u16 syscall_index, u32 count)   nonzero counts only,
                                                  ascending by index

Record files are plain concatenations of frames with no file header.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .core import CountVector, SyscallTable, TraceEvent

RECORD_VERSION = 1

_FIXED = struct.Struct("<IB")  # frame_len, version
_META = struct.Struct("<IQQH")  # pid, interval_start, interval_len, pair_count
_PAIR_DTYPE = np.dtype([("index", "<u2"), ("count", "<u4")])

# Smallest legal frame: empty strings, zero pairs.
_MIN_FRAME = _FIXED.size + 2 + _META.size
_MAX_FRAME = _FIXED.size + 2 + 510 + _META.size + 65535 * 6


class TraceParseError(ValueError):
    """A malformed trace line; carries the 1-based line number when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


class RecordCodecError(ValueError):
    """A frame that cannot be encoded or decoded."""


def parse_trace_line(line: str, table: SyscallTable, lineno: int | None = None) -> TraceEvent:
    """Parse one trace line into a TraceEvent.

    Unknown syscall names resolve to the table's reserved index rather
    than failing, so traces from drifting kernels still parse.
    """
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise TraceParseError(f"expected 5 tab-separated fields, got {len(parts)}", lineno)
    ts_text, host_id, pid_text, declared_name, syscall_name = parts
    try:
        timestamp = int(ts_text)
    except ValueError:
        raise TraceParseError(f"non-numeric timestamp {ts_text!r}", lineno) from None
    if timestamp < 0:
        raise TraceParseError(f"negative timestamp {timestamp}", lineno)
    try:
        pid = int(pid_text)
    except ValueError:
        raise TraceParseError(f"non-numeric pid {pid_text!r}", lineno) from None
    return TraceEvent(timestamp, host_id, pid, declared_name, table.resolve(syscall_name))


def read_trace(source: Path | str | Iterable[str], table: SyscallTable) -> Iterator[TraceEvent]:
    """Stream TraceEvents from a trace file path or an iterable of lines."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from read_trace(fh, table)
        return
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        yield parse_trace_line(line, table, lineno)


def format_trace_line(event: TraceEvent, table: SyscallTable) -> str:
    return (f"{event.timestamp}\t{event.host_id}\t{event.pid}\t"
            f"{event.declared_name}\t{table.name_of(event.syscall)}")


def write_trace(path: Path | str, events: Iterable[TraceEvent], table: SyscallTable) -> int:
    """Write events as trace lines; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(format_trace_line(event, table) + "\n")
            n += 1
    return n


def _encode_string(value: str, what: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 255:
        raise RecordCodecError(f"{what} too long: {len(raw)} bytes (max 255)")
    return bytes([len(raw)]) + raw


def encode_record(v: CountVector) -> bytes:
    """Encode one CountVector as a wire frame.

    Zero counts are omitted, so the frame size is proportional to the
    number of distinct syscalls used, not to the table size.
    """
    counts = np.asarray(v.counts)
    if counts.shape[0] > 65535:
        raise RecordCodecError(f"table size {counts.shape[0]} exceeds u16 index space")
    (nonzero,) = np.nonzero(counts)
    values = counts[nonzero]
    if values.size and int(values.max()) > 0xFFFFFFFF:
        raise RecordCodecError(f"count {int(values.max())} overflows u32")
    if values.size and int(values.min()) < 0:
        raise RecordCodecError("negative count")
    pairs = np.empty(nonzero.size, dtype=_PAIR_DTYPE)
    pairs["index"] = nonzero
    pairs["count"] = values
    body = (bytes([RECORD_VERSION])
            + _encode_string(v.host_id, "host_id")
            + _encode_string(v.declared_name, "declared_name")
            + _META.pack(v.pid, v.interval_start, v.interval_len, nonzero.size)
            + pairs.tobytes())
    return struct.pack("<I", len(body) + 4) + body


def decode_record(frame: bytes, D: int) -> CountVector:
    """Decode one complete frame back into a CountVector.

    The frame must be exactly one record: truncated, oversized, or
    internally inconsistent input raises RecordCodecError.
    """
    counts = np.zeros(D, dtype=np.int64)
    host_id, declared_name, pid, start, length, pairs = _decode_into(frame, D, counts)
    return CountVector(counts, start, length, host_id, pid, declared_name)


def decode_record_sparse(frame: bytes, D: int):
    """Decode a frame without materializing the dense count vector.

    Returns (host_id, declared_name, pid, interval_start, interval_len,
    indices, values) with indices/values as int64 arrays; used on the
    server's hot path where rows are scattered directly into window
    buffers.  Validation matches decode_record exactly.
    """
    return _decode_into(frame, D, None)


def _decode_string(frame: bytes, pos: int, tail: int, what: str) -> tuple[str, int]:
    """Read one u8-length-prefixed string, leaving >= tail bytes after it."""
    length = frame[pos]
    pos += 1
    if pos + length + tail > len(frame):
        raise RecordCodecError(f"truncated frame inside {what}")
    try:
        value = frame[pos:pos + length].decode("utf-8")
    except UnicodeDecodeError as err:
        raise RecordCodecError(f"{what} is not valid UTF-8: {err}") from None
    return value, pos + length


def _decode_into(frame: bytes, D: int, counts: np.ndarray | None):
    """Shared decode core; fills ``counts`` when given, else returns pairs."""
    if len(frame) < _MIN_FRAME:
        raise RecordCodecError(f"truncated frame: {len(frame)} bytes")
    frame_len, version = _FIXED.unpack_from(frame, 0)
    if frame_len != len(frame):
        raise RecordCodecError(f"frame length field {frame_len} != actual {len(frame)}")
    if version != RECORD_VERSION:
        raise RecordCodecError(f"unknown record version {version}")
    pos = _FIXED.size
    host_id, pos = _decode_string(frame, pos, _META.size + 1, "host_id")
    declared_name, pos = _decode_string(frame, pos, _META.size, "declared_name")
    pid, start, length, pair_count = _META.unpack_from(frame, pos)
    pos += _META.size
    if len(frame) - pos != pair_count * _PAIR_DTYPE.itemsize:
        raise RecordCodecError(f"frame holds {len(frame) - pos} pair bytes, "
                               f"expected {pair_count * _PAIR_DTYPE.itemsize}")
    if pair_count:
        pairs = np.frombuffer(frame, dtype=_PAIR_DTYPE, count=pair_count, offset=pos)
        idx = pairs["index"].astype(np.int64)
        val = pairs["count"].astype(np.int64)
        if idx[-1] >= D:
            raise RecordCodecError(f"index {int(idx[-1])} out of table of size {D}")
        if idx.size > 1 and not (np.diff(idx) > 0).all():
            raise RecordCodecError("pair indices not strictly ascending")
        if (val == 0).any():
            raise RecordCodecError("zero count in sparse pair list")
    else:
        idx = np.empty(0, dtype=np.int64)
        val = np.empty(0, dtype=np.int64)
    if counts is None:
        return host_id, declared_name, pid, start, length, idx, val
    counts[idx] = val
    return host_id, declared_name, pid, start, length, pair_count


def write_records(sink: Path | str | BinaryIO, vectors: Iterable[CountVector]) -> int:
    """Append encoded frames to a file or binary stream; returns the count."""
    if isinstance(sink, (str, Path)):
        with open(sink, "ab") as fh:
            return write_records(fh, vectors)
    n = 0
    for v in vectors:
        sink.write(encode_record(v))
        n += 1
    return n


def read_frames(source: Path | str | BinaryIO) -> Iterator[bytes]:
    """Stream raw frames (undecoded bytes) from a record file."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from read_frames(fh)
        return
    while True:
        header = source.read(4)
        if not header:
            return
        if len(header) < 4:
            raise RecordCodecError("truncated frame at end of stream")
        (frame_len,) = struct.unpack("<I", header)
        if not _MIN_FRAME <= frame_len <= _MAX_FRAME:
            raise RecordCodecError(f"implausible frame length {frame_len}")
        rest = source.read(frame_len - 4)
        if len(rest) < frame_len - 4:
            raise RecordCodecError("truncated frame at end of stream")
        yield header + rest


def read_records(source: Path | str | BinaryIO, D: int) -> Iterator[CountVector]:
    """Stream CountVectors from a record file (frame concatenation)."""
    for frame in read_frames(source):
        yield decode_record(frame, D)
