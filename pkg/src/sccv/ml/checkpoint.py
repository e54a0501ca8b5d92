"""Binary model checkpoints.

Layout, all little-endian:

    magic   4 bytes  b"SCCV"
    version u8       currently 1
    variant u8-length-prefixed ascii string
    merge   u8-length-prefixed ascii string (bidi merge mode)
    nscales u8, then that many u16 scale factors
    D u32, H u32, C u32
    names   C u8-length-prefixed utf-8 class names, in label order
    tensors raw float64 little-endian buffers, in ModelParams.tensors()
            order, shapes implied by the header

Class names ride along so serve/detect need nothing beyond the
checkpoint to turn class indices into verdict names.  Training-only
settings (learning rate, epochs, seed) are not part of a checkpoint.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import LstmParams, ModelConfig, ModelParams, VARIANTS

MAGIC = b"SCCV"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Malformed or truncated checkpoint file."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 255:
        raise CheckpointError(f"string field too long: {s[:32]!r}...")
    return struct.pack("<B", len(raw)) + raw


def save_checkpoint(path: str | Path, params: ModelParams, config: ModelConfig,
                    class_names) -> None:
    if params.variant != config.variant:
        raise CheckpointError("params/config variant mismatch")
    class_names = list(class_names)
    if len(class_names) != config.C:
        raise CheckpointError(f"{len(class_names)} class names for C={config.C}")
    parts = [MAGIC, struct.pack("<B", CHECKPOINT_VERSION),
             _pack_str(config.variant), _pack_str(config.bidi_merge),
             struct.pack("<B", len(config.scales))]
    parts.extend(struct.pack("<H", k) for k in config.scales)
    parts.append(struct.pack("<III", config.D, config.H, config.C))
    parts.extend(_pack_str(name) for name in class_names)
    for _, arr in params.tensors():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        n = self.u8()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("undecodable string in checkpoint header") from exc


def load_checkpoint(path: str | Path
                    ) -> tuple[ModelParams, ModelConfig, list[str]]:
    """Read (params, config, class_names) back from a checkpoint file.

    Raises CheckpointError on any malformation; never returns partially
    initialized structures.
    """
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic, not a model checkpoint")
    version = r.u8()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    variant = r.string()
    if variant not in VARIANTS:
        raise CheckpointError(f"unknown variant {variant!r}")
    merge = r.string()
    nscales = r.u8()
    scales = tuple(struct.unpack("<H", r.take(2))[0] for _ in range(nscales))
    D, H, C = struct.unpack("<III", r.take(12))
    try:
        config = ModelConfig(variant=variant, D=D, H=H, C=C,
                             scales=scales or (1,), bidi_merge=merge)
    except ValueError as exc:
        raise CheckpointError(f"invalid checkpoint header: {exc}") from exc
    class_names = [r.string() for _ in range(C)]

    def tensor(shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        arr = np.frombuffer(r.take(n * 8), dtype="<f8").reshape(shape)
        return arr.astype(np.float64)  # own, writable copy

    def lstm() -> LstmParams:
        return LstmParams(tensor((4 * H, D)), tensor((4 * H, H)), tensor((4 * H,)))

    fwd = lstm()
    back = lstm() if variant == "bidi" else None
    F = config.feature_dim
    params = ModelParams(variant, fwd, back, tensor((C, F)), tensor((C,)))
    if r.pos != len(r.blob):
        raise CheckpointError("trailing bytes after checkpoint tensors")
    return params, config, class_names
