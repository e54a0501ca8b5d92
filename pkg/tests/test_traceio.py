"""Trace parsing and the Record wire codec."""
import io

import numpy as np
import pytest

from sccv.core import CountVector, TraceEvent
from sccv.traceio import (RECORD_VERSION, RecordCodecError, TraceParseError,
                          decode_record, decode_record_sparse, encode_record,
                          format_trace_line, parse_trace_line, read_frames,
                          read_records, read_trace, write_records, write_trace)


def make_vector(counts, start=0, host="web-03", pid=4242, name="nginx"):
    return CountVector(np.asarray(counts, dtype=np.int64), start,
                       1_000_000_000, host, pid, name)


def random_vector(rng, D=300):
    counts = np.zeros(D, dtype=np.int64)
    nnz = int(rng.integers(0, min(D, 64)))
    idx = rng.choice(D, size=nnz, replace=False)
    counts[idx] = rng.integers(1, 1 << 31, size=nnz)
    host = "h" + str(int(rng.integers(0, 1000)))
    return CountVector(counts, int(rng.integers(0, 1 << 33)) * 1_000_000_000,
                       1_000_000_000, host, int(rng.integers(0, 1 << 31)),
                       "proc-" + str(int(rng.integers(0, 50))))


class TestTraceText:
    def test_parse_line(self, table):
        line = "1500000000\thost-a\t77\tnginx\tread"
        e = parse_trace_line(line, table)
        assert e == TraceEvent(1500000000, "host-a", 77, "nginx",
                               table.index_of("read"))

    def test_unknown_syscall_resolves_to_reserved(self, table):
        e = parse_trace_line("0\th\t1\tp\tnot_a_syscall", table)
        assert e.syscall == table.reserved_index

    def test_bad_lines_raise_with_lineno(self, table):
        for bad in ("too\tfew", "x\th\t1\tp\tread", "-5\th\t1\tp\tread",
                    "0\th\tpid\tp\tread"):
            with pytest.raises(TraceParseError):
                parse_trace_line(bad, table, lineno=3)
        try:
            parse_trace_line("oops\th\t1\tp\tread", table, lineno=9)
        except TraceParseError as exc:
            assert exc.lineno == 9

    def test_round_trip_via_file(self, table, tmp_path):
        events = [TraceEvent(i * 1000, "h", 5, "p", i % table.size)
                  for i in range(50)]
        p = tmp_path / "trace.tsv"
        assert write_trace(p, events, table) == 50
        back = list(read_trace(p, table))
        assert back == events

    def test_read_trace_skips_blank_lines(self, table):
        lines = ["\n", "0\th\t1\tp\tread\n", "   \n", "1\th\t1\tp\tclose\n"]
        assert len(list(read_trace(lines, table))) == 2

    def test_format_parse_identity(self, table):
        e = TraceEvent(123, "host", 9, "proc name ok", 0)
        assert parse_trace_line(format_trace_line(e, table), table) == e


class TestRecordCodec:
    def test_single_round_trip(self):
        v = make_vector([0, 3, 0, 7, 1])
        frame = encode_record(v)
        assert decode_record(frame, 5) == v

    def test_known_layout(self):
        v = make_vector([0, 2, 0, 0, 9], host="ab", pid=1, name="x")
        frame = encode_record(v)
        # length prefix covers the whole frame; version byte follows
        assert int.from_bytes(frame[:4], "little") == len(frame)
        assert frame[4] == RECORD_VERSION
        assert b"ab" in frame and b"x" in frame

    def test_sparse_decode_matches_dense(self, rng):
        for _ in range(100):
            v = random_vector(rng, D=64)
            frame = encode_record(v)
            host, declared, pid, start, length, idx, val = \
                decode_record_sparse(frame, 64)
            assert (host, declared, pid) == (v.host_id, v.declared_name, v.pid)
            assert (start, length) == (v.interval_start, v.interval_len)
            dense = np.zeros(64, dtype=np.int64)
            dense[idx] = val
            assert np.array_equal(dense, v.counts)

    def test_round_trip_many_random(self, rng):
        for _ in range(1000):
            v = random_vector(rng)
            frame = encode_record(v)
            assert encode_record(decode_record(frame, 300)) == frame

    def test_rejects_corruption(self):
        v = make_vector([1, 2, 3])
        frame = bytearray(encode_record(v))
        with pytest.raises(RecordCodecError):
            decode_record(bytes(frame[:-1]), 3)  # truncated
        with pytest.raises(RecordCodecError):
            decode_record(bytes(frame) + b"\x00", 3)  # trailing junk
        bad_version = frame.copy()
        bad_version[4] ^= 0xFF
        with pytest.raises(RecordCodecError):
            decode_record(bytes(bad_version), 3)
        bad_len = frame.copy()
        bad_len[0] ^= 0x01
        with pytest.raises(RecordCodecError):
            decode_record(bytes(bad_len), 3)

    def test_rejects_index_out_of_range(self):
        v = make_vector([0, 0, 5])
        frame = encode_record(v)
        with pytest.raises(RecordCodecError):
            decode_record(frame, 2)  # index 2 does not fit in D=2

    def test_empty_and_full_vectors(self):
        for counts in ([0, 0, 0], [5, 6, 7]):
            v = make_vector(counts)
            assert decode_record(encode_record(v), 3) == v


class TestRecordFiles:
    def test_write_read_records(self, tmp_path, rng):
        vs = [random_vector(rng, D=32) for _ in range(200)]
        p = tmp_path / "records.bin"
        assert write_records(p, vs) == 200
        assert list(read_records(p, 32)) == vs

    def test_read_frames_raw_equality(self, tmp_path, rng):
        vs = [random_vector(rng, D=16) for _ in range(50)]
        p = tmp_path / "records.bin"
        write_records(p, vs)
        frames = list(read_frames(p))
        assert frames == [encode_record(v) for v in vs]

    def test_file_like_round_trip(self, rng):
        vs = [random_vector(rng, D=8) for _ in range(20)]
        buf = io.BytesIO()
        write_records(buf, vs)
        buf.seek(0)
        assert list(read_records(buf, 8)) == vs

    def test_truncated_file_raises(self, tmp_path):
        p = tmp_path / "records.bin"
        frame = encode_record(make_vector([1, 2]))
        p.write_bytes(frame + frame[: len(frame) // 2])
        with pytest.raises(RecordCodecError):
            list(read_frames(p))
