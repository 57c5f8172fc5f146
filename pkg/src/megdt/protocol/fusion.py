"""Feature gate and mean fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import FeatureTensor
from ..errors import InvalidValueError, ShapeMismatchError


@dataclass(frozen=True)
class FeatureGate:
    """Elementwise weights in [0, 1]; ``alpha`` weights the first (ES-side) operand."""

    alpha: FeatureTensor

    def __post_init__(self):
        a = self.alpha.values
        if a.size and (a.min() < 0 or a.max() > 1):
            raise InvalidValueError("gate weights must lie in [0, 1]")

    @classmethod
    def uniform(cls, shape, alpha: float = 0.5) -> "FeatureGate":
        shape = tuple(shape)
        return cls(FeatureTensor(shape, np.full(int(np.prod(shape)), float(alpha))))


def gate_fuse(local: FeatureTensor, remote: FeatureTensor, gate: FeatureGate) -> FeatureTensor:
    """``alpha * local + (1 - alpha) * remote``, exact where both inputs agree."""
    if not local.shape == remote.shape == gate.alpha.shape:
        raise ShapeMismatchError(
            f"gate fusion needs equal shapes: {list(local.shape)}, {list(remote.shape)}, {list(gate.alpha.shape)}"
        )
    a = gate.alpha.values
    x, y = local.values, remote.values
    out = a * x + (1.0 - a) * y
    return local.with_values(np.where(x == y, x, out))


def fuse_mean(features: Sequence[FeatureTensor]) -> FeatureTensor:
    """Elementwise mean; sorting before summation makes it order-independent bit for bit."""
    if not features:
        raise InvalidValueError("cannot fuse an empty feature list")
    shape = features[0].shape
    for f in features:
        if f.shape != shape:
            raise ShapeMismatchError(f"fusion needs equal shapes: {list(shape)} vs {list(f.shape)}")
    if len(features) == 1:
        return features[0]
    stack = np.sort(np.stack([f.values for f in features]), axis=0)
    mean = stack.sum(axis=0) / len(features)
    return features[0].with_values(np.where(stack[0] == stack[-1], stack[0], mean))
