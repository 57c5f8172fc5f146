"""Digital payloads: IEEE half-precision serialization and top-k pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..channel import BitPayload
from ..core import FeatureTensor
from ..errors import InvalidConfigError, InvalidValueError, PayloadSizeError

FP16_MAX = 65504.0


@dataclass(frozen=True)
class DigitalCodecConfig:
    bits_per_value: int = 16
    clamp_max: float = FP16_MAX

    def __post_init__(self):
        if self.bits_per_value != 16:
            raise InvalidConfigError("only 16-bit values are supported", "bits_per_value")
        if not 0 < self.clamp_max <= FP16_MAX:
            raise InvalidConfigError(f"clamp_max must lie in (0, {FP16_MAX}]", "clamp_max")


def fp16_words(values: np.ndarray, cfg: DigitalCodecConfig) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise InvalidValueError("cannot quantize non-finite values")
    return np.clip(values, -cfg.clamp_max, cfg.clamp_max).astype(">f2")


def sanitize(values: np.ndarray, cfg: DigitalCodecConfig) -> np.ndarray:
    """NaN becomes 0; infinities and out-of-range values saturate at the clamp."""
    out = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=0.0, posinf=cfg.clamp_max, neginf=-cfg.clamp_max)
    return np.clip(out, -cfg.clamp_max, cfg.clamp_max)


def quantize_fp16(t: FeatureTensor, cfg: DigitalCodecConfig = DigitalCodecConfig()) -> BitPayload:
    words = fp16_words(t.values, cfg)
    return BitPayload(np.frombuffer(words.tobytes(), np.uint8), words.size * 16)


def dequantize_fp16(p: BitPayload, shape: Sequence[int], cfg: DigitalCodecConfig = DigitalCodecConfig(),
                    role=None) -> FeatureTensor:
    n = math.prod(shape)
    if p.length_bits != n * 16:
        raise PayloadSizeError(f"payload holds {p.length_bits} bits, shape {list(shape)} needs {n * 16}")
    values = sanitize(np.frombuffer(p.bits.tobytes(), ">f2"), cfg)
    return FeatureTensor(tuple(shape), values, role or "seed")


def fp16_roundtrip(t: FeatureTensor, cfg: DigitalCodecConfig = DigitalCodecConfig()) -> FeatureTensor:
    """What an error-free link delivers after quantization."""
    return t.with_values(sanitize(fp16_words(t.values, cfg), cfg))


def index_bits(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


@dataclass(frozen=True, eq=False)
class PrunedPayload:
    """Sparse top-k payload; ``values`` keep full precision until serialized."""

    shape: tuple[int, ...]
    indices: np.ndarray
    values: np.ndarray

    @property
    def original_dim(self) -> int:
        return math.prod(self.shape)

    @property
    def keep(self) -> int:
        return self.indices.size

    @property
    def payload_bits(self) -> int:
        return pruned_payload_bits(self.original_dim, self.keep)

    def dense(self, role=None) -> FeatureTensor:
        out = np.zeros(self.original_dim)
        out[self.indices] = self.values
        return FeatureTensor(self.shape, out, role or "seed")


def pruned_payload_bits(n: int, keep: int) -> int:
    return keep * (16 + index_bits(n))


def prune_topk(t: FeatureTensor, keep: int) -> PrunedPayload:
    """Keep the ``keep`` largest-magnitude entries; ties favour the lower index."""
    n = t.size
    if not 1 <= keep <= n:
        raise InvalidConfigError(f"keep must lie in [1, {n}], got {keep}", "keep")
    order = np.lexsort((np.arange(n), -np.abs(t.values)))
    idx = np.sort(order[:keep])
    return PrunedPayload(t.shape, idx, t.values[idx].copy())


def pack_pruned(p: PrunedPayload, cfg: DigitalCodecConfig = DigitalCodecConfig()) -> BitPayload:
    """Serialize as ``keep`` records of (index, fp16 value), index bits first."""
    b = index_bits(p.original_dim)
    idx_bits = ((p.indices[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(np.uint8)
    val_bits = np.unpackbits(np.frombuffer(fp16_words(p.values, cfg).tobytes(), np.uint8).reshape(-1, 2), axis=1)
    return BitPayload.from_bits(np.concatenate([idx_bits, val_bits], axis=1))


def unpack_pruned(bits: BitPayload, shape: Sequence[int], keep: int,
                  cfg: DigitalCodecConfig = DigitalCodecConfig()) -> PrunedPayload:
    """Inverse of :func:`pack_pruned`; corrupted out-of-range indices are dropped."""
    shape = tuple(shape)
    n = math.prod(shape)
    b = index_bits(n)
    if bits.length_bits != pruned_payload_bits(n, keep):
        raise PayloadSizeError(f"payload holds {bits.length_bits} bits, expected {pruned_payload_bits(n, keep)}")
    rec = bits.unpack().reshape(keep, b + 16).astype(np.int64)
    idx = rec[:, :b] @ (1 << np.arange(b - 1, -1, -1)) if b else np.zeros(keep, np.int64)
    words = np.packbits(rec[:, b:].astype(np.uint8), axis=1).reshape(-1)
    vals = sanitize(np.frombuffer(words.tobytes(), ">f2"), cfg)
    ok = idx < n
    # a repeated index keeps its last record, as a receiver writing in order would
    idx, vals = idx[ok], vals[ok]
    last = np.unique(idx[::-1], return_index=True)[1]
    sel = idx.size - 1 - last
    return PrunedPayload(shape, idx[sel], vals[sel])
