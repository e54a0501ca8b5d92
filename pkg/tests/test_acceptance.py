"""Acceptance gate: ten end-to-end criteria, one printed line each.

Every test prints exactly one line of the form

    [acceptance] criterion N: PASS - detail
    [acceptance] criterion N: FAIL - detail

directly to the terminal (bypassing pytest capture) and then asserts.
Heavy artifacts (the 10-class dataset, trained models, the twin dataset)
are module-scoped fixtures shared across criteria, so the suite trains
each network exactly once.
"""
import socket
import threading
import time

import numpy as np
import pytest

from sccv.core import (CountVector, TraceEvent, aggregate, default_table,
                       normalize)
from sccv.detect import (AlertDebouncer, Thresholds, VerdictKind,
                         classify_window)
from sccv.ml import (ModelConfig, Prediction, evaluate_macro, forward_batch,
                     init_model, load_checkpoint, loss_and_gradients,
                     predict_windows, save_checkpoint, train, train_baseline)
from sccv.pipeline import Counters, DetectionEngine, SccvServer
from sccv.pipeline.server import DEFAULT_QUEUE_CAP
from sccv.synth import (builtin_profiles, generate_dataset, stationary_mix,
                        twin_profiles)
from sccv.traceio import (RECORD_VERSION, decode_record, encode_record,
                          read_frames)

NS = 1_000_000_000


def report(capfd, n, ok, detail):
    line = f"[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    with capfd.disabled():
        print(line, flush=True)
    assert ok, line


def split_val(ds, frac=0.2):
    """Per-class time-tail holdout (later windows validate)."""
    tr, va = [], []
    for c in range(ds.num_classes):
        (idx,) = np.nonzero(ds.y == c)
        k = max(1, int(round(frac * idx.size)))
        tr.append(idx[:idx.size - k])
        va.append(idx[idx.size - k:])
    return ds.subset(np.concatenate(tr)), ds.subset(np.concatenate(va))


def fit_and_score(variant, train_ds, test_ds, seed=0, epochs=25):
    cfg = ModelConfig(variant=variant, D=train_ds.dim, H=64,
                      C=train_ds.num_classes, lr=0.001, epochs=epochs,
                      batch_size=32, seed=seed)
    t0 = time.monotonic()
    sub, val = split_val(train_ds)
    result = train(cfg, sub, val)
    preds, _ = predict_windows(result.params, cfg, test_ds.X)
    secs = time.monotonic() - t0
    return evaluate_macro(test_ds.y, preds, cfg.C), secs, result, cfg


@pytest.fixture(scope="module")
def table():
    return default_table()


@pytest.fixture(scope="module")
def data10(table):
    return generate_dataset(builtin_profiles(table), 240, window=10, seed=0)


@pytest.fixture(scope="module")
def simple10(data10):
    return fit_and_score("simple", *data10)


@pytest.fixture(scope="module")
def bidi10(data10):
    return fit_and_score("bidi", *data10)


@pytest.fixture(scope="module")
def incep10(data10):
    return fit_and_score("inception", *data10)


@pytest.fixture(scope="module")
def baseline10(data10):
    train_ds, test_ds = data10
    Xr, yr = train_ds.rows()
    model = train_baseline(Xr, yr, train_ds.num_classes, seed=0)
    preds = model.predict_windows(test_ds.X)
    return evaluate_macro(test_ds.y, preds, test_ds.num_classes)


@pytest.fixture(scope="module")
def twins(table):
    profs = list(twin_profiles(table))
    train_ds, test_ds = generate_dataset(profs, 240, window=10, seed=0)
    return profs, train_ds, test_ds


def test_criterion_1_worked_example(capfd):
    """Aggregating the two reference sequences reproduces the published
    count vectors, and normalization matches to three decimals."""
    from sccv.core import parse_syscall_table
    table = parse_syscall_table(
        "0 exit\n1 fork\n2 read\n3 write\n4 open\n5 close")
    seq1 = ["fork", "open", "read", "write", "read", "write", "read"]
    seq2 = ["exit", "read", "write", "write", "close"]
    events = []
    for i, name in enumerate(seq1):
        events.append(TraceEvent(timestamp=100_000_000 * (i + 1),
                                 host_id="h", pid=1, declared_name="p",
                                 syscall=table.index_of(name)))
    for i, name in enumerate(seq2):
        events.append(TraceEvent(timestamp=NS + 150_000_000 * (i + 1),
                                 host_id="h", pid=1, declared_name="p",
                                 syscall=table.index_of(name)))
    vecs = list(aggregate(events, NS, table))
    ok = (len(vecs) == 2
          and np.array_equal(vecs[0].counts, [0, 1, 3, 2, 1, 0])
          and np.array_equal(vecs[1].counts, [1, 0, 1, 2, 0, 1]))
    # published normalized rows are truncated, not rounded, at 3 decimals
    want = [(0.0, 0.142, 0.428, 0.285, 0.142, 0.0),
            (0.2, 0.0, 0.2, 0.4, 0.0, 0.2)]
    for v, w in zip(vecs, want):
        trunc = np.floor(normalize(v) * 1000 + 1e-9) / 1000
        ok = ok and np.array_equal(trunc, w)
    report(capfd, 1, ok,
           "worked example: counts [0,1,3,2,1,0]/[1,0,1,2,0,1], normalized "
           "rows match to 3 decimals (truncated)")


def test_criterion_2_gradient_check(capfd):
    """Analytic BPTT vs central differences, every coordinate, all three
    variants, three seeds: max relative error < 1e-4."""
    t0 = time.monotonic()
    delta = 1e-5
    worst = 0.0

    def loss_only(params, cfg, X, y):
        probs = forward_batch(params, cfg, X)
        ce = -float(np.log(probs[np.arange(y.size), y]).mean())
        return ce + cfg.l2_fc * float((params.fc_w ** 2).sum())

    for variant in ("simple", "bidi", "inception"):
        for seed in (0, 1, 2):
            cfg = ModelConfig(variant=variant, D=12, H=8, C=3, seed=seed)
            params = init_model(cfg, seed=seed)
            rng = np.random.default_rng(1000 + seed)
            X = rng.random((3, 5, 12))
            X /= X.sum(axis=2, keepdims=True)
            y = np.array([0, 1, 2])
            _, grads = loss_and_gradients(params, cfg, (X, y))
            g = dict(grads.tensors())
            for name, arr in params.tensors():
                an = g[name]
                for ix in np.ndindex(arr.shape):
                    orig = arr[ix]
                    arr[ix] = orig + delta
                    lp = loss_only(params, cfg, X, y)
                    arr[ix] = orig - delta
                    lm = loss_only(params, cfg, X, y)
                    arr[ix] = orig
                    fd = (lp - lm) / (2 * delta)
                    rel = abs(fd - an[ix]) / max(abs(fd), abs(an[ix]), 1e-6)
                    worst = max(worst, rel)
    secs = time.monotonic() - t0
    ok = worst < 1e-4 and secs < 120.0
    report(capfd, 2, ok,
           f"gradient check 3 variants x 3 seeds, every coordinate: max "
           f"rel err {worst:.2e} (< 1e-4), {secs:.1f}s (< 120s)")


def test_criterion_3_simple_net_accuracy(capfd, simple10):
    m, secs, _, _ = simple10
    ok = m.macro_precision >= 0.90 and m.macro_recall >= 0.90 and secs < 600
    report(capfd, 3, ok,
           f"10-class simple LSTM: macro P {m.macro_precision:.3f} / R "
           f"{m.macro_recall:.3f} (>= 0.90 both), trained+scored in "
           f"{secs:.0f}s (< 600s)")


def test_criterion_4_variants_comparable(capfd, simple10, bidi10, incep10):
    ms, _, _, _ = simple10
    mb, sb, _, _ = bidi10
    mi, si, _, _ = incep10
    close = all(abs(x - y) <= 0.03 for x, y in [
        (mb.macro_precision, ms.macro_precision),
        (mb.macro_recall, ms.macro_recall),
        (mi.macro_precision, ms.macro_precision),
        (mi.macro_recall, ms.macro_recall)])
    ok = close and (sb + si) < 1800
    report(capfd, 4, ok,
           f"bidi P/R {mb.macro_precision:.3f}/{mb.macro_recall:.3f} and "
           f"inception {mi.macro_precision:.3f}/{mi.macro_recall:.3f} within "
           f"0.03 of simple {ms.macro_precision:.3f}/{ms.macro_recall:.3f}; "
           f"{sb + si:.0f}s (< 1800s)")


def test_criterion_5_twin_processes(capfd, twins):
    profs, train_ds, test_ds = twins
    marg = float(np.abs(stationary_mix(profs[0])
                        - stationary_mix(profs[1])).max())
    Xr, yr = train_ds.rows()
    base = train_baseline(Xr, yr, 2, seed=0)
    m_base = evaluate_macro(test_ds.y, base.predict_windows(test_ds.X), 2)
    # the temporal-only signal needs a longer budget than the 10-class task
    m_net, _, _, _ = fit_and_score("simple", train_ds, test_ds, epochs=40)
    ok = (marg <= 1e-6 and m_base.macro_recall <= 0.6
          and m_net.macro_recall >= 0.9)
    report(capfd, 5, ok,
           f"twin pair: marginal gap {marg:.1e} (<= 1e-6), logistic+vote "
           f"recall {m_base.macro_recall:.3f} (<= 0.6), simple LSTM recall "
           f"{m_net.macro_recall:.3f} (>= 0.9)")


def test_criterion_6_baseline_strictly_below(capfd, simple10, baseline10):
    ms, _, _, _ = simple10
    ok = baseline10.macro_recall < ms.macro_recall
    report(capfd, 6, ok,
           f"logistic baseline recall {baseline10.macro_recall:.3f} strictly "
           f"below simple LSTM {ms.macro_recall:.3f} on the 10-class set")


def _random_vector(rng, D):
    n = int(rng.integers(0, 12))
    counts = np.zeros(D, dtype=np.int64)
    if n:
        idx = rng.choice(D, size=n, replace=False)
        counts[idx] = rng.integers(1, 1 << 31, size=n)
    return CountVector(
        counts=counts,
        interval_start=int(rng.integers(0, 1 << 33)) * NS,
        interval_len=NS,
        host_id=f"host-{rng.integers(0, 999)}",
        pid=int(rng.integers(1, 1 << 31)),
        declared_name=f"proc-{rng.integers(0, 99)}")


def test_criterion_7_codec_and_replay(capfd):
    # 1e4 random records survive the wire bit-exactly
    rng = np.random.default_rng(0xC0DEC)
    D = 300
    mismatches = 0
    for _ in range(10_000):
        v = _random_vector(rng, D)
        w = decode_record(encode_record(v), D)
        if not (np.array_equal(v.counts, w.counts)
                and v.interval_start == w.interval_start
                and v.interval_len == w.interval_len
                and v.host_id == w.host_id and v.pid == w.pid
                and v.declared_name == w.declared_name):
            mismatches += 1

    # live socket ingestion equals offline replay of the stored frames
    cfg = ModelConfig(variant="simple", D=6, H=5, C=3, seed=7)
    names = ["alpha", "beta", "gamma"]

    def make_engine():
        return DetectionEngine(init_model(cfg), cfg, names, interval_ns=NS,
                               window=6, stride=1,
                               thresholds=Thresholds(0.333, 0.3345),
                               malicious=("gamma",), debounce=2,
                               counters=Counters())

    srng = np.random.default_rng(1)
    frames = []
    for pid in range(30):
        for i in range(70):
            if srng.random() < 0.08:
                continue  # gaps
            counts = srng.integers(0, 25, 6).astype(np.int64)
            frames.append(encode_record(CountVector(
                counts=counts, interval_start=i * NS, interval_len=NS,
                host_id=f"h{pid % 3}", pid=pid, declared_name="alpha")))
    import io
    sink = io.BytesIO()
    live_v, live_a = [], []
    server = SccvServer(make_engine(), ("127.0.0.1", 0),
                        on_verdict=live_v.append, on_alert=live_a.append,
                        record_sink=sink)
    server.start()
    sock = socket.create_connection(("127.0.0.1", server.port))
    sock.sendall(bytes([RECORD_VERSION]))
    blob = b"".join(frames)
    for lo in range(0, len(blob), 8192):
        sock.sendall(blob[lo:lo + 8192])
    sock.close()
    deadline = time.monotonic() + 30
    while (server.engine.counters.get("records_in") < len(frames)
           and time.monotonic() < deadline):
        time.sleep(0.01)
    server.stop()
    offline = make_engine()
    rep_v, rep_a = offline.replay(read_frames(io.BytesIO(sink.getvalue())))
    live_ok = (rep_v == live_v and rep_a == live_a and len(live_v) > 1000)
    ok = mismatches == 0 and live_ok
    report(capfd, 7, ok,
           f"codec: 10000/10000 records round-trip bit-exact; offline replay "
           f"of {len(frames)} stored frames reproduces all {len(live_v)} "
           f"live verdicts and {len(live_a)} alerts")


def test_criterion_8_throughput(capfd):
    """>= 20,000 records/s over loopback for 60s, zero queue drops at the
    default capacity, every record consumed and every window classified."""
    NID, NIV, RATE, COHORT = 20_000, 60, 20_000, 2_000
    W = 10
    D = 300
    cfg = ModelConfig(variant="simple", D=D, H=64, C=10, seed=0)
    names = [f"class-{i}" for i in range(10)]
    engine = DetectionEngine(init_model(cfg), cfg, names, interval_ns=NS,
                             window=W, stride=1,
                             thresholds=Thresholds(0.5, 0.9), malicious=(),
                             debounce=3, counters=Counters(),
                             materialize_verdicts=False)
    server = SccvServer(engine, ("127.0.0.1", 0),
                        queue_cap=DEFAULT_QUEUE_CAP)
    server.start()

    # pre-encode the full 60s of traffic: NIV interval cohorts of NID records
    rng = np.random.default_rng(0)
    counts = np.zeros(D, dtype=np.int64)
    blobs = []
    frames = []
    for i in range(NIV):
        idx = rng.choice(D, size=8, replace=False)
        vals = rng.integers(1, 500, size=8)
        counts[:] = 0
        counts[idx] = vals
        for pid in range(NID):
            frames.append(encode_record(CountVector(
                counts=counts, interval_start=i * NS, interval_len=NS,
                host_id="bench", pid=pid, declared_name="class-0")))
            if len(frames) == COHORT:
                blobs.append(b"".join(frames))
                frames.clear()
    assert not frames and len(blobs) == NID * NIV // COHORT

    send_elapsed = [0.0]

    def sender():
        sock = socket.create_connection(("127.0.0.1", server.port))
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.sendall(bytes([RECORD_VERSION]))
        t0 = time.monotonic()
        for k, blob in enumerate(blobs):
            target = t0 + k * (COHORT / RATE)
            now = time.monotonic()
            if target > now:
                time.sleep(target - now)
            sock.sendall(blob)
        send_elapsed[0] = time.monotonic() - t0
        sock.close()

    total = NID * NIV
    t = threading.Thread(target=sender, daemon=True)
    t.start()
    deadline = time.monotonic() + 150
    while (engine.counters.get("records_in") < total
           and time.monotonic() < deadline):
        time.sleep(0.25)
    t.join(10)
    server.stop()
    snap = engine.counters.snapshot()
    rate = total / send_elapsed[0] if send_elapsed[0] else 0.0
    windows = snap.get("windows_classified", 0)
    ok = (send_elapsed[0] >= 59.0
          and rate >= 20_000
          and server.queue.dropped == 0
          and snap.get("records_in") == total
          and windows == NID * (NIV - W + 1))
    report(capfd, 8, ok,
           f"throughput: {total} records at {rate:.0f}/s sustained "
           f"{send_elapsed[0]:.1f}s over loopback, queue drops "
           f"{server.queue.dropped}, {windows} windows classified")


def test_criterion_9_determinism(capfd, table):
    profs = builtin_profiles(table)[:4]
    a_tr, a_te = generate_dataset(profs, 40, window=8, seed=0)
    b_tr, b_te = generate_dataset(profs, 40, window=8, seed=0)
    data_ok = (np.array_equal(a_tr.X, b_tr.X)
               and np.array_equal(a_tr.y, b_tr.y)
               and np.array_equal(a_te.X, b_te.X))
    cfg = ModelConfig(variant="simple", D=a_tr.dim, H=16, C=4, lr=0.001,
                      epochs=3, batch_size=32, seed=0)
    init_ok = all(np.array_equal(x, y) for (_, x), (_, y) in
                  zip(init_model(cfg).tensors(), init_model(cfg).tensors()))
    r1 = train(cfg, a_tr, a_te)
    r2 = train(cfg, b_tr, b_te)
    hist_ok = ([s.train_loss for s in r1.history]
               == [s.train_loss for s in r2.history]
               and [s.val_loss for s in r1.history]
               == [s.val_loss for s in r2.history])
    params_ok = all(np.array_equal(x, y) for (_, x), (_, y) in
                    zip(r1.params.tensors(), r2.params.tensors()))
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as td:
        p1, p2 = Path(td) / "a.ckpt", Path(td) / "b.ckpt"
        save_checkpoint(p1, r1.params, cfg, a_tr.class_names)
        save_checkpoint(p2, r2.params, cfg, a_tr.class_names)
        ckpt_ok = p1.read_bytes() == p2.read_bytes()
        back, _, _ = load_checkpoint(p1)
        ckpt_ok = ckpt_ok and all(
            np.array_equal(x, y) for (_, x), (_, y) in
            zip(back.tensors(), r1.params.tensors()))
    ok = data_ok and init_ok and hist_ok and params_ok and ckpt_ok
    report(capfd, 9, ok,
           f"determinism: dataset={data_ok} init={init_ok} "
           f"training-history={hist_ok} params={params_ok} "
           f"checkpoint-bytes={ckpt_ok} across two identical runs")


def test_criterion_10_decision_and_debounce_oracles(capfd):
    """classify_window and the debouncer agree with independent brute-force
    oracles over 10,000 random streams, exactly."""
    rng = np.random.default_rng(0xDEB0)
    names = ["a", "b", "c", "d"]
    mismatch_verdict = 0
    mismatch_alert = 0
    streams = 10_000
    for _ in range(streams):
        C = 4
        tau_low = float(rng.uniform(0.0, 0.6))
        tau_high = float(rng.uniform(tau_low, 1.0))
        th = Thresholds(tau_low, tau_high)
        malicious = tuple(n for n in names if rng.random() < 0.3)
        n_deb = int(rng.integers(1, 5))
        deb = AlertDebouncer(n_deb)
        length = int(rng.integers(1, 12))
        run_key, run_len = None, 0
        for i in range(length):
            probs = rng.dirichlet(np.full(C, 0.7))
            arg = int(np.argmax(probs))
            pred = Prediction(probs=probs, argmax=arg,
                              confidence=float(probs[arg]))
            declared = names[rng.integers(0, C)]
            v = classify_window(pred, names, declared, th, malicious,
                                host_id="h", pid=1, interval_start=i * NS,
                                interval_len=NS)
            # oracle decision table, written out longhand
            conf = probs[arg]
            predicted = names[arg]
            if conf < tau_low:
                want = VerdictKind.NOVELTY
            elif conf >= tau_high:
                if predicted in malicious:
                    want = VerdictKind.NON_GRATA
                elif predicted != declared:
                    want = VerdictKind.MASQUERADE
                else:
                    want = VerdictKind.NORMAL
            else:
                want = VerdictKind.NORMAL
            if v.kind is not want or v.predicted_name != predicted:
                mismatch_verdict += 1
            # oracle debounce: run-length scan
            alert = deb.feed(v)
            if v.kind is VerdictKind.NORMAL:
                run_key, run_len = None, 0
                want_alert = False
            else:
                key = (v.kind, v.predicted_name)
                run_len = run_len + 1 if key == run_key else 1
                run_key = key
                want_alert = run_len == n_deb
            if (alert is not None) != want_alert:
                mismatch_alert += 1
            elif alert is not None and alert.run_length != n_deb:
                mismatch_alert += 1
    ok = mismatch_verdict == 0 and mismatch_alert == 0
    report(capfd, 10, ok,
           f"decision table and debouncer vs brute-force oracles over "
           f"{streams} random streams: {mismatch_verdict} verdict and "
           f"{mismatch_alert} alert mismatches")
