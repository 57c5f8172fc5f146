"""Codec bindings: how a feature tensor crosses one link and what it costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from ..channel import (
    ANALOG_BITS_PER_SYMBOL,
    ChannelSpec,
    DigitalMode,
    analog_airtime_bits,
    transmit_analog,
    transmit_bits,
)
from ..core import FeatureTensor, RngStream, substream
from ..errors import InvalidConfigError
from .digital import (
    DigitalCodecConfig,
    dequantize_fp16,
    fp16_roundtrip,
    fp16_words,
    pack_pruned,
    prune_topk,
    pruned_payload_bits,
    quantize_fp16,
    sanitize,
    unpack_pruned,
)
from .jscc import JsccCodecConfig, jscc_decode, jscc_encode
from .sketch import SketchConfig, sketch_decode, sketch_encode, sketch_payload_bits, sketch_shape


class Codec:
    """Base binding. Subclasses are immutable and payload size depends only on shape."""

    kind = "abstract"

    def check(self, shape: Sequence[int]) -> None:
        """Raise :class:`InvalidConfigError` if ``shape`` cannot be carried."""

    def payload_bits(self, shape: Sequence[int]) -> int:
        raise NotImplementedError

    def send(self, t: FeatureTensor, ch: ChannelSpec, stream: RngStream,
             mode: DigitalMode = DigitalMode.BER) -> FeatureTensor:
        raise NotImplementedError

    def ideal(self, t: FeatureTensor) -> FeatureTensor:
        """Reconstruction over an error-free link."""
        raise NotImplementedError


@dataclass(frozen=True)
class Fp16Codec(Codec):
    cfg: DigitalCodecConfig = field(default_factory=DigitalCodecConfig)
    kind = "fp16"

    def payload_bits(self, shape):
        return math.prod(shape) * self.cfg.bits_per_value

    def send(self, t, ch, stream, mode=DigitalMode.BER):
        rx = transmit_bits(quantize_fp16(t, self.cfg), ch, stream, mode)
        return dequantize_fp16(rx, t.shape, self.cfg, t.role)

    def ideal(self, t):
        return fp16_roundtrip(t, self.cfg)


@dataclass(frozen=True)
class JsccCodec(Codec):
    cfg: JsccCodecConfig
    bits_per_symbol: int = ANALOG_BITS_PER_SYMBOL
    kind = "jscc"

    def check(self, shape):
        n = math.prod(shape)
        if n != self.cfg.merge_map.original_dim:
            raise InvalidConfigError(
                f"merge map expects {self.cfg.merge_map.original_dim} dims, boundary has {n}", "codec.jscc"
            )

    def payload_bits(self, shape):
        self.check(shape)
        return analog_airtime_bits(self.cfg.merge_map.merged_dim, self.bits_per_symbol)

    def send(self, t, ch, stream, mode=DigitalMode.BER):
        y = transmit_analog(jscc_encode(t, self.cfg), ch, stream)
        return jscc_decode(y, self.cfg, ch.snr_linear, t.shape)

    def ideal(self, t):
        return jscc_decode(jscc_encode(t, self.cfg), self.cfg, math.inf, t.shape)


@dataclass(frozen=True)
class PruneCodec(Codec):
    keep_fraction: float = 0.5
    cfg: DigitalCodecConfig = field(default_factory=DigitalCodecConfig)
    kind = "prune"

    def __post_init__(self):
        if not 0 < self.keep_fraction <= 1:
            raise InvalidConfigError("keep_fraction must lie in (0, 1]", "codec.prune.keep_fraction")

    def keep(self, n: int) -> int:
        return max(1, min(n, round(self.keep_fraction * n)))

    def payload_bits(self, shape):
        n = math.prod(shape)
        return pruned_payload_bits(n, self.keep(n))

    def send(self, t, ch, stream, mode=DigitalMode.BER):
        k = self.keep(t.size)
        rx = transmit_bits(pack_pruned(prune_topk(t, k), self.cfg), ch, stream, mode)
        return unpack_pruned(rx, t.shape, k, self.cfg).dense(t.role)

    def ideal(self, t):
        p = prune_topk(t, self.keep(t.size))
        values = sanitize(fp16_words(p.values, self.cfg), self.cfg)
        return type(p)(p.shape, p.indices, values).dense(t.role)


@dataclass(frozen=True)
class SketchCodec(Codec):
    sketch: SketchConfig = field(default_factory=SketchConfig)
    cfg: DigitalCodecConfig = field(default_factory=DigitalCodecConfig)
    kind = "sketch"

    def check(self, shape):
        try:
            sketch_shape(shape, self.sketch)
        except ValueError as exc:
            raise InvalidConfigError(str(exc), "codec.sketch") from exc

    def payload_bits(self, shape):
        self.check(shape)
        return sketch_payload_bits(shape, self.sketch)

    def send(self, t, ch, stream, mode=DigitalMode.BER):
        s, edges = sketch_encode(t, self.sketch)
        rx = transmit_bits(quantize_fp16(s, self.cfg), ch, substream(stream, "sketch"), mode)
        s_rx = dequantize_fp16(rx, s.shape, self.cfg, s.role)
        e_rx = transmit_bits(edges, ch, substream(stream, "edges"), mode) if edges is not None else None
        return sketch_decode(s_rx, self.sketch, t.shape, e_rx, t.role)

    def ideal(self, t):
        s, edges = sketch_encode(t, self.sketch)
        return sketch_decode(fp16_roundtrip(s, self.cfg), self.sketch, t.shape, edges, t.role)
