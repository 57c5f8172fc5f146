from .digital import (
    FP16_MAX,
    DigitalCodecConfig,
    PrunedPayload,
    dequantize_fp16,
    fp16_roundtrip,
    pack_pruned,
    prune_topk,
    quantize_fp16,
    unpack_pruned,
)
from .jscc import JsccCodecConfig, PowerNorm, fit_jscc, jscc_decode, jscc_encode, lmmse_gain
from .merge import MergeMap, fit_merge_map, merge_expand, merge_reduce, mse_floor
from .sketch import SketchConfig, sketch_decode, sketch_encode
from .transport import Codec, Fp16Codec, JsccCodec, PruneCodec, SketchCodec

__all__ = [
    "FP16_MAX",
    "Codec",
    "DigitalCodecConfig",
    "Fp16Codec",
    "JsccCodec",
    "JsccCodecConfig",
    "MergeMap",
    "PowerNorm",
    "PruneCodec",
    "PrunedPayload",
    "SketchCodec",
    "SketchConfig",
    "dequantize_fp16",
    "fit_jscc",
    "fit_merge_map",
    "fp16_roundtrip",
    "jscc_decode",
    "jscc_encode",
    "lmmse_gain",
    "merge_expand",
    "merge_reduce",
    "mse_floor",
    "pack_pruned",
    "prune_topk",
    "quantize_fp16",
    "sketch_decode",
    "sketch_encode",
    "unpack_pruned",
]
