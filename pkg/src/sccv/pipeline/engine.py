"""Live window assembly and batched classification.

One DetectionEngine owns all per-identity state, so a single consumer
thread (or an offline replay loop) drives it without locking.  Records
arrive as raw wire frames, CountVectors, or pre-decoded sparse rows; the
engine keeps a ring of the last W rows per identity, and every due
window position is copied into a fixed-shape float32 batch classified in
one numpy pass when full (or on flush()).

Inference runs in float32 on preallocated buffers and is organized
around a property of the LSTM: the input projection wx @ x + b depends
only on the row, not the window, so at stride 1 each row is projected
once and its projection reused by every window that overlaps it.  Rows
are normalized into a fixed-size staging matrix as they arrive and
projected with one matrix product per STAGE_ROWS records; rings then
store projected rows, and the per-window cost is only the recurrence.

Every matrix product runs at a fixed shape regardless of how many rows
or windows are actually pending, and neither a gemm nor the elementwise
math mixes batch rows, so results are bit-identical no matter how
arrivals were grouped into calls.  That makes offline replay of a record
file equal to the live path bit for bit; unit tests pin this invariance.

Gap policy: missing intervals are zero-filled, emitting any window
positions that become due, except that a gap of W or more simply clears
the ring and fast-forwards the position counter: every skipped window
would be all zeros, and a silent identity has nothing to classify.
"""
from __future__ import annotations

import logging

import numpy as np

from ..core import CountVector
from ..detect import Alert, Thresholds, Verdict, VerdictKind
from ..ml.model import ModelConfig, ModelParams
from ..traceio import RecordCodecError, decode_record_sparse
from .queueing import Counters

log = logging.getLogger("sccv.pipeline.engine")

DEFAULT_BATCH_WINDOWS = 1024
STAGE_ROWS = 1024

_KINDS = (VerdictKind.NORMAL, VerdictKind.NOVELTY, VerdictKind.NON_GRATA,
          VerdictKind.MASQUERADE)


class _FastLstm:
    """Allocation-free float32 LSTM split into projection and recurrence.

    Gate columns are permuted internally from the stored [i, f, g, o]
    order to [i, f, o, g] so the three sigmoid gates form one contiguous
    block, and the sigmoid-gate weights are pre-halved so the logistic
    can run as 0.5 * tanh(x / 2) + 0.5 (numpy's tanh loop is vectorized
    and branch-free; halving weights is exact in binary floating point).
    """

    def __init__(self, wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
                 B: int, T: int):
        H4, D = wx.shape
        H = H4 // 4
        self.H = H
        self.B = B
        self.T = T
        perm = np.r_[0:2 * H, 3 * H:4 * H, 2 * H:3 * H]
        half = np.ones(H4, dtype=np.float32)
        half[:3 * H] = 0.5
        self.wxT = np.ascontiguousarray(wx.T[:, perm] * half, dtype=np.float32)
        self.whT = np.ascontiguousarray(wh.T[:, perm] * half, dtype=np.float32)
        self.bias = (b[perm] * half).astype(np.float32)
        self._pre = np.empty((B, H4), dtype=np.float32)
        self._hw = np.empty((B, H4), dtype=np.float32)
        self._h = np.empty((B, H), dtype=np.float32)
        self._c = np.empty((B, H), dtype=np.float32)
        self._tc = np.empty((B, H), dtype=np.float32)
        self._tmp = np.empty((B, H), dtype=np.float32)

    def project(self, rows: np.ndarray, out: np.ndarray) -> np.ndarray:
        """wx @ row + b for a (n, D) block of rows, into (n, 4H) out."""
        np.matmul(rows, self.wxT, out=out)
        out += self.bias
        return out

    def recur(self, xp: np.ndarray, reverse: bool = False) -> np.ndarray:
        """Final hidden state from projected rows xp of shape (B, T, 4H)."""
        B, T, H = self.B, self.T, self.H
        self._h[:] = 0.0
        if T == 0:
            return self._h
        self._c[:] = 0.0
        pre, hw = self._pre, self._hw
        i = pre[:, :H]
        f = pre[:, H:2 * H]
        o = pre[:, 2 * H:3 * H]
        g = pre[:, 3 * H:]
        sig = pre[:, :3 * H]
        for t in range(T):
            np.matmul(self._h, self.whT, out=hw)
            np.add(xp[:, T - 1 - t if reverse else t, :], hw, out=pre)
            np.tanh(sig, out=sig)
            sig *= 0.5
            sig += 0.5
            np.tanh(g, out=g)
            np.multiply(f, self._c, out=self._c)
            np.multiply(i, g, out=self._tmp)
            self._c += self._tmp
            np.tanh(self._c, out=self._tc)
            np.multiply(o, self._tc, out=self._h)
        return self._h


def _rescale_norm(X: np.ndarray, k: int, out: np.ndarray) -> np.ndarray:
    """Sum groups of k rows and re-normalize, into ``out``; mirrors
    ml.model.scale_rows for the inception branches."""
    B, T, D = X.shape
    Tk = T // k
    np.sum(X[:, :Tk * k, :].reshape(B, Tk, k, D), axis=2, out=out)
    sums = out.sum(axis=2, keepdims=True)
    np.divide(out, np.where(sums > 0, sums, 1.0), out=out)
    return out


class _Assembler:
    """Rings of the last W (projected, and maybe raw) rows for one identity."""

    __slots__ = ("proj", "raw", "appended", "next_index", "declared",
                 "declared_idx")

    def __init__(self, window: int, P: int, D: int | None, start_index: int):
        self.proj = np.empty((window, P), dtype=np.float32)
        self.raw = None if D is None else np.zeros((window, D),
                                                   dtype=np.float32)
        self.appended = 0
        self.next_index = start_index
        self.declared = ""
        self.declared_idx = -1


class DetectionEngine:
    """Assembles windows from records and classifies them in batches."""

    def __init__(self, params: ModelParams, model_config: ModelConfig,
                 class_names, *, interval_ns: int = 1_000_000_000,
                 window: int = 10, stride: int = 1,
                 thresholds: Thresholds | None = None,
                 malicious=(), debounce: int = 3,
                 batch_windows: int = DEFAULT_BATCH_WINDOWS,
                 counters: Counters | None = None,
                 materialize_verdicts: bool = True):
        if len(class_names) != model_config.C:
            raise ValueError("class_names must have one entry per class")
        if window < 1 or stride < 1:
            raise ValueError("window and stride must be >= 1")
        if interval_ns < 1:
            raise ValueError("interval_ns must be >= 1")
        if batch_windows < 1:
            raise ValueError("batch_windows must be >= 1")
        if debounce < 1:
            raise ValueError("debounce must be >= 1")
        self.model_config = model_config
        self.class_names = list(class_names)
        self.interval_ns = int(interval_ns)
        self.window = int(window)
        self.stride = int(stride)
        self.thresholds = thresholds if thresholds is not None else Thresholds()
        self.malicious = frozenset(malicious)
        self.debounce = int(debounce)
        self.counters = counters if counters is not None else Counters()
        self.batch_windows = int(batch_windows)
        self.materialize_verdicts = materialize_verdicts
        self.D = model_config.D
        self._build_model(params, model_config)
        self._assemblers: dict[tuple[str, int], _Assembler] = {}
        # staging area: rows awaiting their one-off input projection
        self._stage = np.zeros((STAGE_ROWS, self.D), dtype=np.float32)
        self._stage_meta: list = [None] * STAGE_ROWS
        self._stage_n = 0
        # window batch: projected (and for inception, raw) rows per window
        B, W = self.batch_windows, self.window
        self._wproj = np.zeros((B, W, self._P), dtype=np.float32)
        self._wraw = (np.zeros((B, W, self.D), dtype=np.float32)
                      if self._keep_raw else None)
        self._meta: list = [None] * B
        self._count = 0
        self._name_to_idx = {n: i for i, n in enumerate(self.class_names)}
        self._mal_mask = np.array([n in self.malicious
                                   for n in self.class_names], dtype=bool)
        # identity -> [kind, predicted_idx, run_len, first_start_ns]
        self._runs: dict[tuple[str, int], list] = {}

    def _build_model(self, params: ModelParams, cfg: ModelConfig) -> None:
        B, W, H = self.batch_windows, self.window, cfg.H
        self._fwd = _FastLstm(params.lstm.wx, params.lstm.wh, params.lstm.b,
                              B, W)
        self._back = None
        self._branches: list[tuple[_FastLstm, int]] = []
        self._keep_raw = False
        if cfg.variant == "bidi":
            bp = params.lstm_back
            self._back = _FastLstm(bp.wx, bp.wh, bp.b, B, W)
            self._P = 8 * H
        elif cfg.variant == "inception":
            self._keep_raw = True
            self._P = 4 * H
            self._branch_bufs = {}
            for k in cfg.scales:
                if k == 1:
                    continue
                Tk = W // k
                lstm = _FastLstm(params.lstm.wx, params.lstm.wh,
                                 params.lstm.b, B, Tk)
                agg = np.empty((B, max(Tk, 1), self.D), dtype=np.float32)
                xp = np.empty((B * max(Tk, 1), 4 * H), dtype=np.float32)
                self._branches.append((lstm, k))
                self._branch_bufs[k] = (agg, xp)
        else:
            self._P = 4 * H
        # projection of an all-zero row; gap fills reuse it directly
        self._zero_proj = np.empty(self._P, dtype=np.float32)
        self._zero_proj[:4 * H] = self._fwd.bias
        if self._back is not None:
            self._zero_proj[4 * H:] = self._back.bias
        self._stage_proj = np.empty((STAGE_ROWS, 4 * H), dtype=np.float32)
        self._stage_proj_b = (np.empty((STAGE_ROWS, 4 * H), dtype=np.float32)
                              if self._back is not None else None)
        F = cfg.feature_dim
        self._feats = np.empty((B, F), dtype=np.float32)
        self.fc_wT = np.ascontiguousarray(params.fc_w.T, dtype=np.float32)
        self.fc_b = params.fc_b.astype(np.float32)
        self._logits = np.empty((B, cfg.C), dtype=np.float32)
        self._probs = np.empty((B, cfg.C), dtype=np.float32)

    @property
    def assembler_count(self) -> int:
        return len(self._assemblers)

    # ------------------------------------------------------------- ingest

    def feed_frame(self, frame: bytes) -> tuple[list[Verdict], list[Alert]]:
        """Ingest one raw wire frame; malformed frames are counted, not fatal."""
        try:
            rec = decode_record_sparse(frame, self.D)
        except RecordCodecError as exc:
            self.counters.inc("records_bad")
            log.debug("dropping undecodable frame: %s", exc)
            return [], []
        return self.feed_many((rec,))

    def feed_vector(self, v: CountVector) -> tuple[list[Verdict], list[Alert]]:
        """Ingest one already-decoded CountVector."""
        (idx,) = np.nonzero(v.counts)
        return self.feed_many(((v.host_id, v.declared_name, v.pid,
                                v.interval_start, v.interval_len, idx,
                                v.counts[idx]),))

    def feed_decoded(self, host: str, declared: str, pid: int, start: int,
                     length: int, idx, val
                     ) -> tuple[list[Verdict], list[Alert]]:
        """Ingest one record already decoded to sparse (index, count) arrays.

        The argument order matches decode_record_sparse exactly, so its
        result tuple can be splatted straight in.
        """
        return self.feed_many(((host, declared, pid, start, length, idx,
                                val),))

    def feed_many(self, records) -> tuple[list[Verdict], list[Alert]]:
        """Ingest an iterable of decode_record_sparse-order record tuples.

        Equivalent to feeding them one at a time, but amortizes the
        projection work; how records are grouped into calls never
        changes any output.
        """
        out_v: list[Verdict] = []
        out_a: list[Alert] = []
        counters = self.counters
        interval = self.interval_ns
        stage = self._stage
        meta = self._stage_meta
        n_rec = 0
        for host, declared, pid, start, length, idx, val in records:
            n_rec += 1
            if length != interval or start % interval:
                counters.inc("records_misaligned")
                continue
            s = self._stage_n
            row = stage[s]
            row[:] = 0.0
            if len(idx):
                row[idx] = val / val.sum()
            meta[s] = (host, pid, declared, start // interval)
            self._stage_n = s + 1
            if self._stage_n == STAGE_ROWS:
                self._distribute(out_v, out_a)
        counters.inc("records_in", n_rec)
        if out_a:
            counters.inc("alerts", len(out_a))
        return out_v, out_a

    # -------------------------------------------------- projection stage

    def _distribute(self, out_v: list, out_a: list) -> None:
        """Project all staged rows at fixed shape, then append each to its
        identity's ring in arrival order, emitting due windows."""
        n = self._stage_n
        if n == 0:
            return
        counters = self.counters
        self._fwd.project(self._stage, self._stage_proj)
        if self._back is not None:
            self._back.project(self._stage, self._stage_proj_b)
        W = self.window
        for s in range(n):
            host, pid, declared, index = self._stage_meta[s]
            key = (host, pid)
            asm = self._assemblers.get(key)
            if asm is None:
                asm = _Assembler(W, self._P,
                                 self.D if self._keep_raw else None, index)
                self._assemblers[key] = asm
            if declared != asm.declared:
                asm.declared = declared
                asm.declared_idx = self._name_to_idx.get(declared, -1)
            gap = index - asm.next_index
            if gap < 0:
                counters.inc("records_late")
                continue
            if gap:
                counters.inc("rows_gap_filled", gap)
                if gap >= W:
                    asm.proj[:] = self._zero_proj
                    if asm.raw is not None:
                        asm.raw[:] = 0.0
                    asm.appended += gap
                    asm.next_index += gap
                else:
                    for _ in range(gap):
                        self._append(asm, key, None, out_v, out_a)
            self._append(asm, key, s, out_v, out_a)
        self._stage_n = 0

    def _append(self, asm: _Assembler, key: tuple[str, int], s: int | None,
                out_v: list, out_a: list) -> None:
        """Append one staged row (or a zero fill when s is None)."""
        W = self.window
        slot = asm.appended % W
        row = asm.proj[slot]
        if s is None:
            row[:] = self._zero_proj
            if asm.raw is not None:
                asm.raw[slot] = 0.0
        else:
            H4 = 4 * self.model_config.H
            row[:H4] = self._stage_proj[s]
            if self._back is not None:
                row[H4:] = self._stage_proj_b[s]
            if asm.raw is not None:
                asm.raw[slot] = self._stage[s]
        position = asm.next_index
        asm.appended += 1
        asm.next_index += 1
        if asm.appended >= W and (asm.appended - W) % self.stride == 0:
            k = self._count
            h = asm.appended % W
            dst = self._wproj[k]
            dst[:W - h] = asm.proj[h:]
            dst[W - h:] = asm.proj[:h]
            if asm.raw is not None:
                draw = self._wraw[k]
                draw[:W - h] = asm.raw[h:]
                draw[W - h:] = asm.raw[:h]
            self._meta[k] = (key, asm.declared, asm.declared_idx,
                             position * self.interval_ns)
            self._count = k + 1
            if self._count == self.batch_windows:
                self._classify_flush(out_v, out_a)

    def flush(self) -> tuple[list[Verdict], list[Alert]]:
        """Project and classify everything pending now."""
        out_v: list[Verdict] = []
        out_a: list[Alert] = []
        self._distribute(out_v, out_a)
        self._classify_flush(out_v, out_a)
        if out_a:
            self.counters.inc("alerts", len(out_a))
        return out_v, out_a

    # -------------------------------------------------------- classify

    def _forward_windows(self) -> np.ndarray:
        """Class probabilities for the whole window batch, shape (B, C)."""
        cfg = self.model_config
        H = cfg.H
        if cfg.variant == "simple":
            feats = self._fwd.recur(self._wproj)
        elif cfg.variant == "bidi":
            hf = self._fwd.recur(self._wproj[:, :, :4 * H])
            hb = self._back.recur(self._wproj[:, :, 4 * H:], reverse=True)
            if cfg.bidi_merge == "concat":
                self._feats[:, :H] = hf
                self._feats[:, H:] = hb
                feats = self._feats
            else:
                np.add(hf, hb, out=self._feats[:, :H])
                self._feats[:, :H] *= 0.5
                feats = self._feats[:, :H]
        else:
            branch = 0
            for k in cfg.scales:
                dst = self._feats[:, branch * H:(branch + 1) * H]
                if k == 1:
                    dst[:] = self._fwd.recur(self._wproj)
                else:
                    lstm = next(l for l, kk in self._branches if kk == k)
                    if lstm.T == 0:
                        dst[:] = 0.0
                    else:
                        agg, xp = self._branch_bufs[k]
                        _rescale_norm(self._wraw, k, agg)
                        lstm.project(agg.reshape(-1, self.D), xp)
                        dst[:] = lstm.recur(
                            xp.reshape(agg.shape[0], lstm.T, 4 * H))
                branch += 1
            feats = self._feats
        np.matmul(feats, self.fc_wT, out=self._logits)
        self._logits += self.fc_b
        # stable softmax, mirroring ml.model.softmax
        m = self._logits.max(axis=1, keepdims=True)
        np.subtract(self._logits, m, out=self._probs)
        np.exp(self._probs, out=self._probs)
        self._probs /= self._probs.sum(axis=1, keepdims=True)
        return self._probs

    def _classify_flush(self, out_v: list, out_a: list) -> None:
        k = self._count
        if k == 0:
            return
        # full fixed-shape batch every time; stale rows past k influence
        # nothing because the math never mixes batch rows
        probs = self._forward_windows()
        conf = probs[:k].max(axis=1)
        arg = probs[:k].argmax(axis=1)
        declared_idx = np.fromiter((self._meta[i][2] for i in range(k)),
                                   dtype=np.int64, count=k)
        # decision table, first match wins: novelty, non-grata, masquerade
        novelty = conf < self.thresholds.tau_low
        accuse = conf >= self.thresholds.tau_high
        mal = self._mal_mask[arg]
        nongrata = accuse & mal
        masq = accuse & ~mal & (arg != declared_idx)
        kinds = np.zeros(k, dtype=np.int8)
        kinds[novelty] = 1
        kinds[nongrata] = 2
        kinds[masq] = 3
        counts = np.bincount(kinds, minlength=4)
        counters = self.counters
        counters.inc("windows_classified", k)
        for code in range(4):
            if counts[code]:
                counters.inc(f"verdict_{_KINDS[code].value}", int(counts[code]))
        runs = self._runs
        if self.materialize_verdicts:
            for i in range(k):
                verdict = self._make_verdict(i, kinds[i], arg[i], conf[i])
                out_v.append(verdict)
                self._debounce(verdict, out_a)
        elif runs or counts[1:].any():
            for i in range(k):
                code = kinds[i]
                if code:
                    self._debounce(self._make_verdict(i, code, arg[i],
                                                      conf[i]), out_a)
                elif runs:
                    runs.pop(self._meta[i][0], None)
        self._count = 0

    def _make_verdict(self, i: int, code: int, arg: int,
                      conf: float) -> Verdict:
        key, declared, _, start = self._meta[i]
        return Verdict(kind=_KINDS[code], host_id=key[0], pid=key[1],
                       declared_name=declared,
                       predicted_name=self.class_names[arg],
                       confidence=float(conf), interval_start=start,
                       interval_len=self.interval_ns)

    def _debounce(self, verdict: Verdict, out_a: list) -> None:
        """Same run semantics as detect.AlertDebouncer, inlined."""
        key = (verdict.host_id, verdict.pid)
        runs = self._runs
        if verdict.kind is VerdictKind.NORMAL:
            runs.pop(key, None)
            return
        run = runs.get(key)
        if run is not None and run[0] is verdict.kind \
                and run[1] == verdict.predicted_name:
            run[2] += 1
            length, first = run[2], run[3]
        else:
            runs[key] = [verdict.kind, verdict.predicted_name, 1,
                         verdict.interval_start]
            length, first = 1, verdict.interval_start
        if length == self.debounce:
            out_a.append(Alert(
                kind=verdict.kind, host_id=verdict.host_id, pid=verdict.pid,
                declared_name=verdict.declared_name,
                predicted_name=verdict.predicted_name,
                confidence=verdict.confidence, first_interval_start=first,
                interval_start=verdict.interval_start,
                interval_len=verdict.interval_len, run_length=length))

    def replay(self, frames) -> tuple[list[Verdict], list[Alert]]:
        """Run a frame iterable through the engine and flush at the end."""
        all_v: list[Verdict] = []
        all_a: list[Alert] = []
        for frame in frames:
            v, a = self.feed_frame(frame)
            all_v.extend(v)
            all_a.extend(a)
        v, a = self.flush()
        all_v.extend(v)
        all_a.extend(a)
        return all_v, all_a
