"""Interpretable sketch codec: average pooling plus an optional 1-bit edge map.

The last two axes of a tensor are spatial; leading axes are carried through.
This pooling codec stands in for a learned sketch encoder/decoder pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..channel import BitPayload
from ..core import FeatureTensor, Role
from ..errors import InvalidConfigError, InvalidShapeError, ShapeMismatchError


@dataclass(frozen=True)
class SketchConfig:
    downsample_factor: int = 2
    edge_bits: bool = False
    edge_threshold: float = 0.5

    def __post_init__(self):
        if int(self.downsample_factor) < 1:
            raise InvalidConfigError("downsample_factor must be >= 1", "downsample_factor")
        if not self.edge_threshold > 0:
            raise InvalidConfigError("edge_threshold must be > 0", "edge_threshold")


def sketch_shape(shape: Sequence[int], cfg: SketchConfig) -> tuple[int, ...]:
    shape = tuple(shape)
    f = cfg.downsample_factor
    if len(shape) < 2:
        raise InvalidShapeError(f"sketching needs two spatial axes, got shape {list(shape)}")
    h, w = shape[-2:]
    if h % f or w % f:
        raise InvalidShapeError(f"spatial dims {h}x{w} not divisible by factor {f}")
    return shape[:-2] + (h // f, w // f)


def sketch_payload_bits(shape: Sequence[int], cfg: SketchConfig) -> int:
    n = math.prod(sketch_shape(shape, cfg))
    return n * 16 + (n if cfg.edge_bits else 0)


def edge_map(sketch: np.ndarray, threshold: float) -> np.ndarray:
    grads = [np.gradient(sketch, axis=ax) if sketch.shape[ax] > 1 else np.zeros_like(sketch) for ax in (-2, -1)]
    return np.hypot(*grads) > threshold


def sketch_encode(t: FeatureTensor, cfg: SketchConfig) -> tuple[FeatureTensor, BitPayload | None]:
    out_shape = sketch_shape(t.shape, cfg)
    f = cfg.downsample_factor
    a = t.array()
    pooled = a.reshape(out_shape[:-2] + (out_shape[-2], f, out_shape[-1], f)).mean(axis=(-3, -1))
    edges = BitPayload.from_bits(edge_map(pooled, cfg.edge_threshold).reshape(-1)) if cfg.edge_bits else None
    return FeatureTensor(out_shape, pooled.reshape(-1), Role.SKETCH), edges


def _upsample_axis(a: np.ndarray, axis: int, f: int) -> np.ndarray:
    n = a.shape[axis]
    pos = np.clip((np.arange(n * f) + 0.5) / f - 0.5, 0, n - 1)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    w = pos - i0
    shape = [1] * a.ndim
    shape[axis] = n * f
    w = w.reshape(shape)
    return np.take(a, i0, axis=axis) * (1 - w) + np.take(a, i1, axis=axis) * w


def sketch_decode(sketch: FeatureTensor, cfg: SketchConfig, target_shape: Sequence[int],
                  edges: BitPayload | None = None, role: Role | str = Role.SEED) -> FeatureTensor:
    """Bilinear upsampling; cells flagged in ``edges`` are held constant instead."""
    target_shape = tuple(target_shape)
    if sketch_shape(target_shape, cfg) != sketch.shape:
        raise ShapeMismatchError(
            f"sketch {list(sketch.shape)} does not upsample to {list(target_shape)} at factor {cfg.downsample_factor}"
        )
    f = cfg.downsample_factor
    s = sketch.array()
    out = _upsample_axis(_upsample_axis(s, -2, f), -1, f)
    if edges is not None:
        if edges.length_bits != sketch.size:
            raise ShapeMismatchError(f"edge map has {edges.length_bits} bits, sketch has {sketch.size} cells")
        marked = edges.unpack().astype(bool).reshape(sketch.shape)
        nearest = np.repeat(np.repeat(s, f, axis=-2), f, axis=-1)
        mask = np.repeat(np.repeat(marked, f, axis=-2), f, axis=-1)
        out = np.where(mask, nearest, out)
    return FeatureTensor(target_shape, out.reshape(-1), role)
