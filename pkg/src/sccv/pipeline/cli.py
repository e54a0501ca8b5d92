"""Command line interface.

Subcommands: gen, aggregate, train, eval, serve, agent, detect.  Every
run echoes its resolved configuration (including the seed) as one JSON
line before doing work, so experiment logs are self-describing.  The
SCCV_LOG environment variable sets the log level (DEBUG/INFO/WARNING/
ERROR; default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import Aggregator, load_syscall_table
from ..dataset import DatasetError, SequenceDataset, load_dataset, save_dataset
from ..detect import Thresholds, format_alert_line
from ..ml.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..ml.metrics import evaluate_macro
from ..ml.model import ModelConfig
from ..ml.train import predict_windows, train, train_baseline
from ..synth import (builtin_profiles, format_profiles, generate_dataset,
                     parse_profiles)
from ..traceio import (RecordCodecError, TraceParseError, decode_record_sparse,
                       read_frames, read_trace, write_records)
from .agent import AgentConfig, AgentError, agent_run
from .engine import DetectionEngine
from .queueing import Counters
from .server import DEFAULT_QUEUE_CAP, SccvServer

log = logging.getLogger("sccv.cli")

MODEL_DISPLAY = {"logistic": "Logistic regression",
                 "simple": "Simple LSTM",
                 "bidi": "Bidirectional LSTM",
                 "inception": "Inception-like LSTM"}


class CliError(RuntimeError):
    """User-facing CLI failure with an actionable message."""


def _setup_logging() -> None:
    level_name = os.environ.get("SCCV_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _echo_config(command: str, args: argparse.Namespace) -> None:
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        if isinstance(value, Path):
            value = str(value)
        resolved[key] = value
    print(f"config {command} " + json.dumps(resolved, sort_keys=True))


def _interval_ns(secs: float) -> int:
    if secs <= 0:
        raise CliError("--interval-secs must be positive")
    return int(round(secs * 1e9))


def _host_port(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise CliError(f"address {text!r} is not HOST:PORT")
    try:
        return host, int(port)
    except ValueError:
        raise CliError(f"address {text!r} has a non-numeric port") from None


def _scales(text: str) -> tuple[int, ...]:
    try:
        scales = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise CliError(f"--scales {text!r} is not a comma list of ints") from None
    if not scales:
        raise CliError("--scales must name at least one scale")
    return scales


def _malicious(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _load_table(path):
    try:
        return load_syscall_table(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load syscall table: {exc}") from exc


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint {path} does not exist") from None
    except CheckpointError as exc:
        raise CliError(f"bad checkpoint {path}: {exc}") from exc


def _load_ds(path):
    try:
        return load_dataset(path)
    except DatasetError as exc:
        raise CliError(f"bad dataset {path}: {exc}") from exc


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("simple", "bidi", "inception"),
                   default="simple", help="network variant")
    p.add_argument("--hidden", type=int, default=64, help="LSTM hidden size")
    p.add_argument("--scales", default="1,2,3",
                   help="inception time scales, comma separated")
    p.add_argument("--merge", choices=("concat", "average"), default="concat",
                   help="bidirectional merge mode")
    p.add_argument("--lr", type=float, default=0.001, help="Adam step size")
    p.add_argument("--l2", type=float, default=1e-4,
                   help="L2 penalty on the readout weights")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=32, help="minibatch size")


def _add_detect_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-low", type=float, default=0.5,
                   help="below this confidence: Novelty")
    p.add_argument("--tau-high", type=float, default=0.9,
                   help="at or above this confidence: accusations allowed")
    p.add_argument("--malicious", default="",
                   help="comma list of class names treated as non-grata")
    p.add_argument("--debounce", type=int, default=3,
                   help="consecutive identical verdicts before an alert")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--interval-secs", type=float, default=1.0)


def _model_config(args, D: int, C: int) -> ModelConfig:
    return ModelConfig(variant=args.model, D=D, H=args.hidden, C=C,
                       scales=_scales(args.scales), bidi_merge=args.merge,
                       lr=args.lr, l2_fc=args.l2, epochs=args.epochs,
                       batch_size=args.batch, seed=args.seed)


def _split_validation(ds: SequenceDataset, frac: float):
    """Per-class time-tail holdout for best-epoch selection."""
    train_idx, val_idx = [], []
    for c in range(ds.num_classes):
        (idx,) = np.nonzero(ds.y == c)
        k = max(1, int(round(frac * idx.size))) if idx.size > 1 else 0
        train_idx.append(idx[:idx.size - k])
        val_idx.append(idx[idx.size - k:])
    return ds.subset(np.concatenate(train_idx)), ds.subset(np.concatenate(val_idx))


def cmd_gen(args) -> int:
    table = _load_table(args.table)
    if args.profiles is not None:
        try:
            profiles = parse_profiles(Path(args.profiles).read_text("utf-8"),
                                      table)
        except OSError as exc:
            raise CliError(f"cannot read profiles: {exc}") from exc
    else:
        profiles = builtin_profiles(table)
    interval_ns = _interval_ns(args.interval_secs)
    train_ds, test_ds = generate_dataset(
        profiles, args.windows_per_class, window=args.window,
        interval_ns=interval_ns, seed=args.seed, train_frac=args.train_frac)
    out = Path(args.out)
    save_dataset(out / "train", train_ds)
    save_dataset(out / "test", test_ds)
    (out / "profiles.txt").write_text(format_profiles(profiles, table),
                                      encoding="utf-8")
    print(f"gen wrote {len(train_ds)} train and {len(test_ds)} test windows "
          f"({train_ds.num_classes} classes, W={train_ds.window}, "
          f"D={train_ds.dim}) under {out}")
    return 0


def cmd_aggregate(args) -> int:
    table = _load_table(args.table)
    interval_ns = _interval_ns(args.interval_secs)
    agg = Aggregator(interval_ns, table.size)
    source = sys.stdin if args.trace == "-" else args.trace
    if isinstance(source, str) and not Path(source).is_file():
        raise CliError(f"trace file {source} does not exist")
    n = 0
    try:
        with open(args.out, "wb") as sink:
            for event in read_trace(source, table):
                n += write_records(sink, agg.add(event))
            n += write_records(sink, agg.flush())
    except TraceParseError as exc:
        raise CliError(f"bad trace line: {exc}") from exc
    print(f"aggregate wrote {n} records to {args.out} "
          f"(late drops: {agg.late_dropped})")
    return 0


def cmd_train(args) -> int:
    ds = _load_ds(args.data)
    if args.val is not None:
        train_ds, val_ds = ds, _load_ds(args.val)
        if val_ds.dim != ds.dim or val_ds.num_classes != ds.num_classes:
            raise CliError(f"validation set {args.val} disagrees with training "
                           f"set on D ({val_ds.dim} vs {ds.dim}) or classes")
    else:
        train_ds, val_ds = _split_validation(ds, args.val_frac)
    config = _model_config(args, ds.dim, ds.num_classes)
    result = train(config, train_ds, val_ds)
    save_checkpoint(args.out, result.params, config, ds.class_names)
    best = result.history[result.best_epoch]
    print(f"train {args.model}: best epoch {result.best_epoch} "
          f"val_loss {best.val_loss:.4f} "
          f"val_macro_p {best.val_metrics.macro_precision:.4f} "
          f"val_macro_r {best.val_metrics.macro_recall:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = _load_ds(args.data)
    rows = []
    if args.train is not None:
        train_ds = _load_ds(args.train)
        if train_ds.dim != ds.dim:
            raise CliError("--train and --data disagree on D")
        Xr, yr = train_ds.rows()
        baseline = train_baseline(Xr, yr, train_ds.num_classes, seed=args.seed)
        preds = baseline.predict_windows(ds.X)
        m = evaluate_macro(ds.y, preds, ds.num_classes)
        rows.append(("logistic", m))
    for ckpt in args.ckpt or []:
        params, config, names = _load_ckpt(ckpt)
        if config.D != ds.dim:
            raise CliError(f"checkpoint {ckpt} has D={config.D} but dataset "
                           f"{args.data} has D={ds.dim}")
        if config.C != ds.num_classes:
            raise CliError(f"checkpoint {ckpt} has {config.C} classes but "
                           f"dataset has {ds.num_classes}")
        if names != ds.class_names:
            log.warning("checkpoint %s class names differ from dataset", ckpt)
        preds, _ = predict_windows(params, config, ds.X)
        rows.append((config.variant, evaluate_macro(ds.y, preds,
                                                    ds.num_classes)))
    if not rows:
        raise CliError("nothing to evaluate: give --ckpt and/or --train")
    name_w = max(len(MODEL_DISPLAY[r[0]]) for r in rows)
    print(f"{'model':<{name_w}}  {'precision':>9}  {'recall':>9}")
    for key, m in rows:
        print(f"{MODEL_DISPLAY[key]:<{name_w}}  {m.macro_precision:>9.3f}  "
              f"{m.macro_recall:>9.3f}")
    return 0


def _build_engine(args, counters: Counters | None = None) -> DetectionEngine:
    params, config, names = _load_ckpt(args.ckpt)
    return DetectionEngine(
        params, config, names,
        interval_ns=_interval_ns(args.interval_secs), window=args.window,
        stride=args.stride,
        thresholds=Thresholds(args.tau_low, args.tau_high),
        malicious=_malicious(args.malicious), debounce=args.debounce,
        counters=counters if counters is not None else Counters(),
        materialize_verdicts=False)


def cmd_serve(args) -> int:
    engine = _build_engine(args)
    alerts_out = sys.stdout if args.alerts_out is None \
        else open(args.alerts_out, "a", encoding="utf-8")
    sink = open(args.store, "ab") if args.store else None

    def on_alert(alert):
        alerts_out.write(format_alert_line(alert) + "\n")
        alerts_out.flush()

    server = SccvServer(engine, _host_port(args.listen),
                        queue_cap=args.queue_cap,
                        metrics_port=args.metrics_port,
                        on_alert=on_alert, record_sink=sink)
    server.start()
    print(f"serve listening on port {server.port}"
          + (f", metrics on {server.metrics_port}" if server.metrics_port
             else ""))
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        while not stop.is_set():
            stop.wait(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        if sink is not None:
            sink.close()
        if alerts_out is not sys.stdout:
            alerts_out.close()
        print(server.render_metrics(), end="")
    return 0


def cmd_agent(args) -> int:
    table = _load_table(args.table)
    if args.trace != "-" and not Path(args.trace).is_file():
        raise CliError(f"trace file {args.trace} does not exist")
    config = AgentConfig(source=args.trace, server=_host_port(args.connect),
                         interval_ns=_interval_ns(args.interval_secs),
                         flush_period_ns=_interval_ns(args.flush_secs),
                         host_id=args.host_id,
                         buffer_records=args.buffer_records,
                         max_retries=args.retries)
    stats = agent_run(config, table)
    print(f"agent sent {stats.records_sent} records "
          f"({stats.events_read} events, {stats.reconnects} reconnects, "
          f"{stats.records_dropped} dropped)")
    return 0


def cmd_detect(args) -> int:
    engine = _build_engine(args)
    if not Path(args.records).is_file():
        raise CliError(f"records file {args.records} does not exist")
    out = sys.stdout if args.out is None else open(args.out, "w",
                                                   encoding="utf-8")
    try:
        def handle(_verdicts, alerts):
            for a in alerts:
                out.write(format_alert_line(a) + "\n")

        for frame in read_frames(args.records):
            handle(*engine.feed_decoded(*decode_record_sparse(frame,
                                                              engine.D)))
        handle(*engine.flush())
    except RecordCodecError as exc:
        raise CliError(f"bad records file {args.records}: {exc}") from exc
    finally:
        if out is not sys.stdout:
            out.close()
    snap = engine.counters.snapshot()
    kinds = {k.removeprefix("verdict_"): v for k, v in snap.items()
             if k.startswith("verdict_")}
    summary = " ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
    print(f"detect classified {snap.get('windows_classified', 0)} windows: "
          f"{summary or 'none'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sccv",
        description="Syscall count-vector process monitoring toolkit")
    parser.add_argument("--version", action="version",
                        version=f"sccv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--profiles", default=None,
                   help="profile text file (default: builtin profiles)")
    p.add_argument("--table", default=None, help="syscall table file")
    p.add_argument("--windows-per-class", type=int, default=240)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--interval-secs", type=float, default=1.0)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("aggregate", help="aggregate a trace file into records")
    p.add_argument("--trace", required=True, help="trace file, or - for stdin")
    p.add_argument("--out", required=True, help="records file to write")
    p.add_argument("--table", default=None)
    p.add_argument("--interval-secs", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("train", help="train a classifier on a dataset")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--val", default=None, help="validation dataset directory")
    p.add_argument("--val-frac", type=float, default=0.2,
                   help="holdout fraction when --val is not given")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    _add_model_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report macro precision/recall per model")
    p.add_argument("--data", required=True, help="test dataset directory")
    p.add_argument("--ckpt", action="append",
                   help="checkpoint to evaluate (repeatable)")
    p.add_argument("--train", default=None,
                   help="training dataset directory, fits the logistic "
                        "baseline for comparison")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the monitoring server")
    p.add_argument("--listen", default="127.0.0.1:7070")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queue-cap", type=int, default=DEFAULT_QUEUE_CAP)
    p.add_argument("--metrics-port", type=int, default=None)
    p.add_argument("--alerts-out", default=None,
                   help="append alert lines here (default stdout)")
    p.add_argument("--store", default=None,
                   help="append received raw records to this file")
    _add_detect_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agent", help="stream a trace to the server")
    p.add_argument("--connect", default="127.0.0.1:7070")
    p.add_argument("--trace", required=True, help="trace file, or - for stdin")
    p.add_argument("--table", default=None)
    p.add_argument("--interval-secs", type=float, default=1.0)
    p.add_argument("--flush-secs", type=float, default=5.0)
    p.add_argument("--host-id", default=None)
    p.add_argument("--buffer-records", type=int, default=8192)
    p.add_argument("--retries", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("detect", help="offline detection over a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", default=None, help="alert lines (default stdout)")
    _add_detect_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    _echo_config(args.command, args)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
