"""Sequence classifiers over count-vector windows, implemented on numpy.

Three recurrent variants share one LSTM cell implementation:

* ``simple``    - one forward LSTM, readout = final hidden state.
* ``bidi``      - two independent LSTMs, one reading the window in time
                  order and one in reverse; final states concatenated or
                  averaged.
* ``inception`` - one weight-tied LSTM applied to the same window rebinned
                  at several interval multiples; final states concatenated.

Training runs in float64 with exact backpropagation through time; the
gradients here are checked coordinate-wise against central finite
differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..core import NormalizedSequence

VARIANTS = ("simple", "bidi", "inception")
MERGE_MODES = ("concat", "average")

GATE_ORDER = ("input", "forget", "cell", "output")


class NumericsError(RuntimeError):
    """Raised when a non-finite value shows up in a loss or gradient."""


@dataclass
class ModelConfig:
    """Hyperparameters for one classifier.

    ``scales`` only matters for the inception variant, ``bidi_merge`` only
    for the bidirectional one.  Adam moment decay and epsilon are fixed at
    the conventional 0.9 / 0.999 / 1e-8.
    """

    variant: str = "simple"
    D: int = 300
    H: int = 64
    C: int = 2
    scales: tuple[int, ...] = (1, 2, 3)
    bidi_merge: str = "concat"
    l2_fc: float = 1e-4
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.bidi_merge not in MERGE_MODES:
            raise ValueError(f"bidi_merge must be one of {MERGE_MODES}")
        if self.H < 1 or self.D < 1 or self.C < 1:
            raise ValueError("D, H and C must all be >= 1")
        self.scales = tuple(int(k) for k in self.scales)
        if not self.scales or any(k < 1 for k in self.scales):
            raise ValueError("scales must be a nonempty list of integers >= 1")
        if self.l2_fc < 0:
            raise ValueError("l2_fc must be >= 0")

    @property
    def feature_dim(self) -> int:
        """Width of the vector the fully-connected readout consumes."""
        if self.variant == "simple":
            return self.H
        if self.variant == "bidi":
            return 2 * self.H if self.bidi_merge == "concat" else self.H
        return self.H * len(self.scales)


@dataclass
class LstmParams:
    """One LSTM parameter set, gates stacked along the first axis.

    Row blocks follow GATE_ORDER: rows [0,H) are the input gate, [H,2H)
    the forget gate, [2H,3H) the cell candidate, [3H,4H) the output gate.
    """

    wx: np.ndarray  # (4H, D)
    wh: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of (wx, wh, b) for one named gate."""
        H = self.hidden
        i = GATE_ORDER.index(name)
        sl = slice(i * H, (i + 1) * H)
        return self.wx[sl], self.wh[sl], self.b[sl]

    def copy(self) -> "LstmParams":
        return LstmParams(self.wx.copy(), self.wh.copy(), self.b.copy())


@dataclass
class ModelParams:
    """All trainable tensors of one classifier.

    ``lstm_back`` is present only for the bidirectional variant; the
    inception variant deliberately holds a single LSTM parameter set that
    every scale branch shares.
    """

    variant: str
    lstm: LstmParams
    lstm_back: LstmParams | None
    fc_w: np.ndarray  # (C, F)
    fc_b: np.ndarray  # (C,)

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """(name, array) leaves in checkpoint order."""
        yield "lstm.wx", self.lstm.wx
        yield "lstm.wh", self.lstm.wh
        yield "lstm.b", self.lstm.b
        if self.lstm_back is not None:
            yield "lstm_back.wx", self.lstm_back.wx
            yield "lstm_back.wh", self.lstm_back.wh
            yield "lstm_back.b", self.lstm_back.b
        yield "fc_w", self.fc_w
        yield "fc_b", self.fc_b

    def with_tensors(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        """Rebuild with the given leaves replaced (missing ones are kept)."""
        current = dict(self.tensors())
        current.update(arrays)
        back = None
        if self.lstm_back is not None:
            back = LstmParams(current["lstm_back.wx"], current["lstm_back.wh"],
                              current["lstm_back.b"])
        return ModelParams(self.variant,
                           LstmParams(current["lstm.wx"], current["lstm.wh"],
                                      current["lstm.b"]),
                           back, current["fc_w"], current["fc_b"])

    def copy(self) -> "ModelParams":
        return self.with_tensors({name: arr.copy() for name, arr in self.tensors()})

    def check_finite(self, context: str = "params") -> None:
        for name, arr in self.tensors():
            if not np.isfinite(arr).all():
                raise NumericsError(f"non-finite value in {context} tensor {name!r}")


@dataclass
class Prediction:
    """Class distribution for one window."""

    probs: np.ndarray  # (C,), nonnegative, sums to 1
    argmax: int
    confidence: float  # max prob


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple[int, ...]) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _init_lstm(rng: np.random.Generator, D: int, H: int) -> LstmParams:
    wx = _glorot(rng, D, H, (4 * H, D))
    wh = _glorot(rng, H, H, (4 * H, H))
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0  # forget-gate bias starts open
    return LstmParams(wx, wh, b)


def init_model(config: ModelConfig, seed: int | None = None) -> ModelParams:
    """Deterministic Glorot-uniform initialization.

    Weight matrices draw from uniform(-s, s) with s = sqrt(6/(fan_in +
    fan_out)); biases start at zero except the forget gate's, which starts
    at 1.  Draw order is the checkpoint tensor order, so a seed pins every
    weight bit-for-bit.
    """
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CC7]))
    lstm = _init_lstm(rng, config.D, config.H)
    back = _init_lstm(rng, config.D, config.H) if config.variant == "bidi" else None
    F = config.feature_dim
    fc_w = _glorot(rng, F, config.C, (config.C, F))
    fc_b = np.zeros(config.C)
    return ModelParams(config.variant, lstm, back, fc_w, fc_b)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function.

    Branch-free form exp(-|x|) never overflows and vectorizes well; the
    masked two-branch formulation costs several times more on large gate
    tensors because of the fancy-indexed copies.
    """
    z = np.exp(-np.abs(x))
    d = 1.0 + z
    return np.where(x >= 0, 1.0 / d, z / d)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def scale_rows(X: np.ndarray, k: int) -> np.ndarray:
    """Rebin normalized rows onto a k-times-coarser time grid.

    Sums groups of k consecutive rows (dropping the remainder, matching
    count-vector rescaling) and re-normalizes each summed row so every
    scale branch sees L1-normalized input; all-zero rows stay zero.
    """
    if k == 1:
        return X
    B, T, D = X.shape
    Tk = T // k
    if Tk == 0:
        return np.zeros((B, 0, D), dtype=X.dtype)
    S = X[:, :Tk * k, :].reshape(B, Tk, k, D).sum(axis=2)
    sums = S.sum(axis=2, keepdims=True)
    return S / np.where(sums > 0, sums, 1.0)


class _LstmCache:
    """Per-step activations kept for backpropagation through time."""

    __slots__ = ("X", "gates", "C", "TC", "Hprev")

    def __init__(self, X, gates, C, TC, Hprev):
        self.X = X
        self.gates = gates  # (T, B, 4H): sigma/tanh-activated gate values
        self.C = C  # (T, B, H) cell states
        self.TC = TC  # (T, B, H) tanh of cell states
        self.Hprev = Hprev  # (T, B, H) hidden state entering each step


def lstm_forward(lp: LstmParams, X: np.ndarray,
                 want_cache: bool = True) -> tuple[np.ndarray, _LstmCache | None]:
    """Run the LSTM over a (B, T, D) batch from zero initial state.

    Returns the final hidden state (B, H).  Gate math per step t:
    i,f,o = sigmoid, g = tanh of the four affine maps; c = f*c_prev + i*g;
    h = o * tanh(c).
    """
    B, T, D = X.shape
    H = lp.hidden
    h = np.zeros((B, H), dtype=X.dtype)
    if T == 0:
        return h, None
    c = np.zeros((B, H), dtype=X.dtype)
    xproj = (X.reshape(B * T, D) @ lp.wx.T).reshape(B, T, 4 * H)
    xproj += lp.b
    if want_cache:
        gates = np.empty((T, B, 4 * H), dtype=X.dtype)
        Cs = np.empty((T, B, H), dtype=X.dtype)
        TCs = np.empty((T, B, H), dtype=X.dtype)
        Hprev = np.empty((T, B, H), dtype=X.dtype)
    for t in range(T):
        pre = xproj[:, t, :] + h @ lp.wh.T
        i = sigmoid(pre[:, :H])
        f = sigmoid(pre[:, H:2 * H])
        g = np.tanh(pre[:, 2 * H:3 * H])
        o = sigmoid(pre[:, 3 * H:])
        if want_cache:
            Hprev[t] = h
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        if want_cache:
            gates[t, :, :H] = i
            gates[t, :, H:2 * H] = f
            gates[t, :, 2 * H:3 * H] = g
            gates[t, :, 3 * H:] = o
            Cs[t] = c
            TCs[t] = tc
    cache = _LstmCache(X, gates, Cs, TCs, Hprev) if want_cache else None
    return h, cache


def lstm_backward(lp: LstmParams, cache: _LstmCache, dh_final: np.ndarray) -> LstmParams:
    """Exact BPTT given the gradient at the final hidden state.

    Returns gradients shaped like the parameter set.  Input gradients are
    not needed (windows are data, not parameters) and are not computed.
    """
    X, gates, Cs, TCs, Hprev = cache.X, cache.gates, cache.C, cache.TC, cache.Hprev
    B, T, D = X.shape
    H = lp.hidden
    dwx = np.zeros_like(lp.wx)
    dwh = np.zeros_like(lp.wh)
    db = np.zeros_like(lp.b)
    dh = dh_final
    dc = np.zeros_like(dh_final)
    dpre = np.empty((B, 4 * H), dtype=X.dtype)
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        tc = TCs[t]
        c_prev = Cs[t - 1] if t > 0 else np.zeros_like(tc)
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc = dc * f  # gradient flowing to c_{t-1}
        dpre[:, :H] = di * i * (1.0 - i)
        dpre[:, H:2 * H] = df * f * (1.0 - f)
        dpre[:, 2 * H:3 * H] = dg * (1.0 - g * g)
        dpre[:, 3 * H:] = do * o * (1.0 - o)
        dwx += dpre.T @ X[:, t, :]
        dwh += dpre.T @ Hprev[t]
        db += dpre.sum(axis=0)
        dh = dpre @ lp.wh
    return LstmParams(dwx, dwh, db)


def _batch_features(params: ModelParams, config: ModelConfig, X: np.ndarray,
                    want_cache: bool) -> tuple[np.ndarray, list]:
    """Feature vectors for a (B, W, D) batch plus caches for backprop."""
    if params.variant == "simple":
        h, cache = lstm_forward(params.lstm, X, want_cache)
        return h, [cache]
    if params.variant == "bidi":
        hf, cf = lstm_forward(params.lstm, X, want_cache)
        hb, cb = lstm_forward(params.lstm_back, np.ascontiguousarray(X[:, ::-1, :]),
                              want_cache)
        if config.bidi_merge == "concat":
            return np.hstack([hf, hb]), [cf, cb]
        return 0.5 * (hf + hb), [cf, cb]
    feats = []
    caches = []
    for k in config.scales:
        Xk = np.ascontiguousarray(scale_rows(X, k))
        hk, ck = lstm_forward(params.lstm, Xk, want_cache)
        feats.append(hk)
        caches.append(ck)
    return np.hstack(feats), caches


def forward_batch(params: ModelParams, config: ModelConfig,
                  X: np.ndarray) -> np.ndarray:
    """Class probabilities (B, C) for a batch of windows; no caches kept."""
    feats, _ = _batch_features(params, config, X, want_cache=False)
    return softmax(feats @ params.fc_w.T + params.fc_b)


def model_forward(params: ModelParams, config: ModelConfig,
                  seq: NormalizedSequence | np.ndarray) -> Prediction:
    """Classify one window."""
    rows = seq.rows if isinstance(seq, NormalizedSequence) else np.asarray(seq)
    if rows.ndim != 2 or rows.shape[1] != config.D:
        raise ValueError(f"expected rows of width D={config.D}, "
                         f"got shape {rows.shape}")
    probs = forward_batch(params, config, rows[None, :, :].astype(np.float64))[0]
    arg = int(np.argmax(probs))
    return Prediction(probs=probs, argmax=arg, confidence=float(probs[arg]))


def _stack_batch(batch, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2:
        X, y = batch
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)
    seqs = list(batch)
    if not seqs:
        raise ValueError("empty batch")
    X = np.stack([s.rows for s in seqs]).astype(np.float64)
    labels = [s.label for s in seqs]
    if any(l is None for l in labels):
        raise ValueError("unlabeled sequence in training batch")
    return X, np.asarray(labels, dtype=np.int64)


def loss_and_gradients(params: ModelParams, config: ModelConfig,
                       batch) -> tuple[float, ModelParams]:
    """Mean cross-entropy plus the FC weight penalty, with exact gradients.

    ``batch`` is either a list of labeled NormalizedSequences or an
    (X, y) pair with X of shape (B, W, D).  The returned gradients share
    the ModelParams structure.  A non-finite loss or gradient raises
    NumericsError naming the first offending tensor.
    """
    X, y = _stack_batch(batch, config)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    B = X.shape[0]
    feats, caches = _batch_features(params, config, X, want_cache=True)
    logits = feats @ params.fc_w.T + params.fc_b
    logp = log_softmax(logits)
    ce = -float(logp[np.arange(B), y].mean())
    loss = ce + config.l2_fc * float((params.fc_w ** 2).sum())
    if not np.isfinite(loss):
        raise NumericsError("non-finite loss (cross-entropy diverged)")

    dlogits = softmax(logits)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    dfc_w = dlogits.T @ feats + 2.0 * config.l2_fc * params.fc_w
    dfc_b = dlogits.sum(axis=0)
    dfeats = dlogits @ params.fc_w

    H = config.H
    if params.variant == "simple":
        dlstm = lstm_backward(params.lstm, caches[0], dfeats)
        grads = ModelParams(params.variant, dlstm, None, dfc_w, dfc_b)
    elif params.variant == "bidi":
        if config.bidi_merge == "concat":
            dhf, dhb = dfeats[:, :H], dfeats[:, H:]
        else:
            dhf = dhb = 0.5 * dfeats
        dfwd = lstm_backward(params.lstm, caches[0], np.ascontiguousarray(dhf))
        dbwd = lstm_backward(params.lstm_back, caches[1], np.ascontiguousarray(dhb))
        grads = ModelParams(params.variant, dfwd, dbwd, dfc_w, dfc_b)
    else:
        dwx = np.zeros_like(params.lstm.wx)
        dwh = np.zeros_like(params.lstm.wh)
        db = np.zeros_like(params.lstm.b)
        for branch, cache in enumerate(caches):
            if cache is None:  # scale longer than the window: empty branch
                continue
            dh = np.ascontiguousarray(dfeats[:, branch * H:(branch + 1) * H])
            g = lstm_backward(params.lstm, cache, dh)
            dwx += g.wx
            dwh += g.wh
            db += g.b
        grads = ModelParams(params.variant, LstmParams(dwx, dwh, db), None,
                            dfc_w, dfc_b)
    grads.check_finite("gradient")
    return loss, grads
