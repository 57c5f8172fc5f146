"""Tensors, random streams and distortion metrics used across the simulator.

Every randomized operation takes an :class:`RngStream`.  A stream is just a
``(seed, stream_id)`` pair; the numpy generator is rebuilt from it on demand, so
streams are immutable values that can be shared freely between threads.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidShapeError, InvalidValueError, ShapeMismatchError

PSNR_CAP_DB = 200.0
_U64 = (1 << 64) - 1


class Role(str, enum.Enum):
    SEED = "seed"
    SKETCH = "sketch"
    PROMPT = "prompt"
    IMAGE = "image"


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if not shape or any(d < 1 for d in shape):
        raise InvalidShapeError(f"invalid shape {list(shape)}: need at least one dimension, all >= 1")
    return shape


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Shaped block of finite float64 values with a payload role.

    ``values`` is the flat row-major buffer and is made read-only on
    construction.  Zero-length tensors (``shape == (0,)``) are allowed so that
    channel operations can pass empty payloads through; use
    :func:`gaussian_tensor` and friends for validated non-empty shapes.
    """

    shape: tuple[int, ...]
    values: np.ndarray
    role: Role = Role.SEED

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if not shape or any(d < 0 for d in shape):
            raise InvalidShapeError(f"invalid shape {list(shape)}")
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != math.prod(shape):
            raise InvalidShapeError(
                f"shape {list(shape)} holds {math.prod(shape)} values, got {values.size}"
            )
        if not np.isfinite(values).all():
            raise InvalidValueError("feature tensors must hold finite values only")
        values.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "role", Role(self.role))

    @classmethod
    def from_array(cls, array, role: Role | str = Role.SEED) -> "FeatureTensor":
        array = np.asarray(array, dtype=np.float64)
        return cls(array.shape or (1,), array.reshape(-1), Role(role))

    @property
    def size(self) -> int:
        return self.values.size

    def array(self) -> np.ndarray:
        """Read-only view shaped like the tensor."""
        return self.values.reshape(self.shape)

    def with_values(self, values, shape: Sequence[int] | None = None) -> "FeatureTensor":
        return FeatureTensor(tuple(shape) if shape is not None else self.shape, values, self.role)

    def __eq__(self, other):
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.role == other.role
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class RngStream:
    """Splittable random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v <= _U64:
                raise InvalidValueError(f"{name} must be an unsigned 64-bit integer, got {v}")
            object.__setattr__(self, name, v)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32,
                                      self.stream_id & 0xFFFFFFFF, self.stream_id >> 32])
        return np.random.Generator(np.random.PCG64(seq))


def substream(parent: RngStream, label: str) -> RngStream:
    """Child stream whose id is a stable hash of the parent id and ``label``."""
    h = hashlib.blake2b(digest_size=8, person=b"megdt-substream")
    h.update(parent.stream_id.to_bytes(8, "little"))
    h.update(label.encode("utf-8"))
    return RngStream(parent.seed, int.from_bytes(h.digest(), "little"))


def gaussian_tensor(shape: Sequence[int], stream: RngStream, role: Role | str = Role.SEED) -> FeatureTensor:
    shape = _check_shape(shape)
    values = stream.generator().standard_normal(math.prod(shape))
    return FeatureTensor(shape, values, Role(role))


def _pair(a: FeatureTensor, b: FeatureTensor) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {list(a.shape)} vs {list(b.shape)}")
    return a.values, b.values


def mse(a: FeatureTensor, b: FeatureTensor) -> float:
    x, y = _pair(a, b)
    if x.size == 0:
        return 0.0
    d = x - y
    err = float(np.dot(d, d) / d.size)
    if err == 0.0 and d.any():
        # squares underflowed; keep mse == 0 reserved for identical tensors
        return math.ulp(0.0)
    return err


def psnr_from_mse(err: float, peak: float = 1.0, cap: float = PSNR_CAP_DB) -> float:
    if peak <= 0:
        raise InvalidValueError(f"peak must be positive, got {peak}")
    if err == 0:
        return cap
    return 10.0 * math.log10(peak * peak / err)


def psnr(a: FeatureTensor, b: FeatureTensor, peak: float = 1.0, cap: float = PSNR_CAP_DB) -> float:
    """PSNR in dB; identical tensors give ``cap`` instead of infinity."""
    if peak <= 0:
        raise InvalidValueError(f"peak must be positive, got {peak}")
    return psnr_from_mse(mse(a, b), peak, cap)


@dataclass(frozen=True)
class DistortionReport:
    mse: float
    psnr_db: float
    per_dim_max_err: float

    @classmethod
    def zero(cls, cap: float = PSNR_CAP_DB) -> "DistortionReport":
        return cls(0.0, cap, 0.0)


def distortion(reference: FeatureTensor, received: FeatureTensor, peak: float = 1.0,
               cap: float = PSNR_CAP_DB) -> DistortionReport:
    x, y = _pair(reference, received)
    err = mse(reference, received)
    max_err = float(np.max(np.abs(x - y))) if x.size else 0.0
    return DistortionReport(err, psnr_from_mse(err, peak, cap), max_err)
