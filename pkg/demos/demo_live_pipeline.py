#!/usr/bin/env python3
"""End-to-end: train, serve, stream an attack, alert, then replay.

Trains a quick 3-class model, starts the detection server on loopback,
and runs the agent over a synthetic trace in which one process is honest,
one declares itself "web-server" while behaving like a database, and one
is an honest-about-itself cryptominer.  Live verdicts and alerts stream
out of the server; afterwards the stored record file is replayed through
a fresh engine to show the offline path reproduces the live run exactly.
"""
import argparse
import io
import time
from collections import Counter

from sccv import builtin_profiles, default_table, format_alert_line, generate_dataset
from sccv.ml import ModelConfig, evaluate_macro, predict_windows, train
from sccv.pipeline import DetectionEngine, SccvServer
from sccv.pipeline.agent import AgentConfig, agent_run
from sccv.synth import generate_events
from sccv.traceio import read_frames

NS = 1_000_000_000


def wait_until(cond, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if cond():
            return True
        time.sleep(0.02)
    return cond()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--intervals", type=int, default=60,
                        help="seconds of trace per process (default 60)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    table = default_table()
    by_name = {p.name: p for p in builtin_profiles(table)}
    classes = ["web-server", "database", "cryptominer"]
    profiles = [by_name[c] for c in classes]

    print("[1/4] training a 3-class model...")
    train_ds, test_ds = generate_dataset(profiles, 120, seed=args.seed)
    config = ModelConfig(variant="simple", D=table.size, H=32, C=3,
                         epochs=20, seed=args.seed)
    result = train(config, train_ds, val_data=test_ds)
    preds, _ = predict_windows(result.params, config, test_ds.X)
    m = evaluate_macro(test_ds.y, preds, 3)
    print(f"      macro recall {m.macro_recall:.3f} on held-out windows")

    def fresh_engine():
        return DetectionEngine(result.params, config, classes,
                               malicious=("cryptominer",), debounce=3)

    print("[2/4] starting server on loopback...")
    sink = io.BytesIO()
    live_v, live_a = [], []
    engine = fresh_engine()
    server = SccvServer(engine, ("127.0.0.1", 0), record_sink=sink,
                        on_verdict=live_v.append, on_alert=live_a.append)
    server.start()
    print(f"      listening on 127.0.0.1:{server.port}")

    # three processes on one host: honest, masquerading, and malicious
    events = []
    events += generate_events(by_name["web-server"], "edge-1", 501,
                              args.intervals, NS, seed=1)
    events += generate_events(by_name["database"], "edge-1", 502,
                              args.intervals, NS, seed=2,
                              declared_name="web-server")
    events += generate_events(by_name["cryptominer"], "edge-1", 503,
                              args.intervals, NS, seed=3)
    events.sort(key=lambda e: e.timestamp)
    print(f"[3/4] agent streaming {len(events)} events "
          f"({args.intervals}s x 3 pids)...")
    stats = agent_run(AgentConfig(source=events,
                                  server=("127.0.0.1", server.port)), table)
    drained = wait_until(
        lambda: engine.counters.get("records_in") == stats.records_sent)
    server.stop()
    print(f"      {stats.records_sent} records sent, drained={drained}, "
          f"queue drops {server.queue.dropped}")

    print(f"\nlive verdicts ({len(live_v)} windows):")
    for pid in (501, 502, 503):
        kinds = Counter(v.kind.value for v in live_v if v.pid == pid)
        declared = next(v.declared_name for v in live_v if v.pid == pid)
        breakdown = ", ".join(f"{k}={n}" for k, n in sorted(kinds.items()))
        print(f"  pid {pid} (declared {declared:<12}): {breakdown}")

    print(f"\nalerts after debouncing ({len(live_a)}):")
    for a in live_a[:4]:
        print(f"  {format_alert_line(a)}")
    if len(live_a) > 4:
        print(f"  ... and {len(live_a) - 4} more")

    print("\n[4/4] replaying the stored record file through a fresh "
          "engine...")
    rep_v, rep_a = fresh_engine().replay(
        read_frames(io.BytesIO(sink.getvalue())))
    same = rep_v == live_v and rep_a == live_a
    print(f"      replay == live: {same} "
          f"({len(rep_v)} verdicts, {len(rep_a)} alerts)")


if __name__ == "__main__":
    main()
