"""sccv: syscall count-vector process monitoring toolkit.

Aggregates syscall traces into per-interval count vectors, ships them as
compact binary records, classifies windows of them with from-scratch
LSTM variants, and turns confident misfits into Novelty / Non-grata /
Masquerade alerts.
"""
from .core import (Aggregator, CountVector, NormalizedSequence, StreamOrderError,
                   SyscallTable, SyscallTableError, TraceEvent, aggregate,
                   assemble_sequences, default_table, load_syscall_table,
                   normalize, normalize_rows, parse_syscall_table, rescale)
from .detect import (Alert, AlertDebouncer, Thresholds, Verdict, VerdictKind,
                     alert_stream, classify_window, format_alert_line)
from .dataset import DatasetError, SequenceDataset, load_dataset, save_dataset
from .synth import (ProcessProfile, ProfileState, ProfileError, TWIN_NAMES,
                    builtin_profiles, format_profiles, generate_dataset,
                    generate_events, parse_profiles, simulate_counts,
                    stationary_mix, twin_profiles)
from .traceio import (RECORD_VERSION, RecordCodecError, TraceParseError,
                      decode_record, decode_record_sparse, encode_record,
                      format_trace_line, parse_trace_line, read_frames,
                      read_records, read_trace, write_records, write_trace)

__version__ = "0.1.0"

__all__ = [
    "Aggregator", "CountVector", "NormalizedSequence", "StreamOrderError",
    "SyscallTable", "SyscallTableError", "TraceEvent", "aggregate",
    "assemble_sequences", "default_table", "load_syscall_table", "normalize",
    "normalize_rows", "parse_syscall_table", "rescale",
    "Alert", "AlertDebouncer", "Thresholds", "Verdict", "VerdictKind",
    "alert_stream", "classify_window", "format_alert_line",
    "DatasetError", "SequenceDataset", "load_dataset", "save_dataset",
    "ProcessProfile", "ProfileState", "ProfileError", "TWIN_NAMES",
    "builtin_profiles", "format_profiles", "generate_dataset",
    "generate_events", "parse_profiles", "simulate_counts", "stationary_mix",
    "twin_profiles",
    "RECORD_VERSION", "RecordCodecError", "TraceParseError", "decode_record",
    "decode_record_sparse", "encode_record", "format_trace_line",
    "parse_trace_line", "read_frames", "read_records", "read_trace",
    "write_records", "write_trace",
    "__version__",
]
