"""Analog joint source-channel coding: merge, normalize, LMMSE estimate.

The encoder maps merged group means straight onto channel symbols after
removing the calibration mean and scaling to unit average power.  The decoder
shrinks the noisy symbols by snr/(1+snr), the LMMSE gain for a unit-power
source, then undoes the normalization and expands groups back to neurons.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import FeatureTensor
from ..errors import DomainError, InvalidConfigError, ShapeMismatchError
from .merge import MergeMap, fit_merge_map, group_means, merge_expand, merge_reduce

JSCC_FORMAT = "megdt.jscc"
JSCC_VERSION = 1


@dataclass(frozen=True)
class PowerNorm:
    mean: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidConfigError(f"scale must be positive, got {self.scale}", "power_norm.scale")
        if not math.isfinite(self.mean):
            raise InvalidConfigError("mean must be finite", "power_norm.mean")


@dataclass(frozen=True)
class JsccCodecConfig:
    merge_map: MergeMap
    power_norm: PowerNorm = PowerNorm()

    def to_dict(self) -> dict:
        return {
            "format": JSCC_FORMAT,
            "version": JSCC_VERSION,
            "power_norm": {"mean": self.power_norm.mean, "scale": self.power_norm.scale},
            "merge_map": self.merge_map.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JsccCodecConfig":
        if doc.get("format") != JSCC_FORMAT or doc.get("version") != JSCC_VERSION:
            raise InvalidConfigError(f"unsupported JSCC artifact {doc.get('format')!r} v{doc.get('version')!r}", "jscc")
        norm = doc["power_norm"]
        return cls(MergeMap.from_dict(doc["merge_map"]), PowerNorm(norm["mean"], norm["scale"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "JsccCodecConfig":
        return cls.from_dict(json.loads(text))


def calibrate_power(calibration: Sequence[FeatureTensor], m: MergeMap) -> PowerNorm:
    merged = np.concatenate([group_means(t.values, m) for t in calibration])
    mean = float(merged.mean())
    return PowerNorm(mean, float(np.sqrt(np.mean((merged - mean) ** 2))))


def fit_jscc(calibration: Sequence[FeatureTensor], merged_dim: int) -> JsccCodecConfig:
    m = fit_merge_map(calibration, merged_dim)
    return JsccCodecConfig(m, calibrate_power(calibration, m))


def lmmse_gain(snr_linear: float) -> float:
    if not snr_linear > 0:
        raise DomainError(f"SNR must be positive, got {snr_linear}")
    if math.isinf(snr_linear):
        return 1.0
    return snr_linear / (1.0 + snr_linear)


def jscc_encode(t: FeatureTensor, cfg: JsccCodecConfig) -> FeatureTensor:
    reduced = merge_reduce(t, cfg.merge_map)
    norm = cfg.power_norm
    return reduced.with_values((reduced.values - norm.mean) / norm.scale)


def jscc_decode(y: FeatureTensor, cfg: JsccCodecConfig, snr_linear: float,
                shape: Sequence[int] | None = None) -> FeatureTensor:
    if y.size != cfg.merge_map.merged_dim:
        raise ShapeMismatchError(f"expected {cfg.merge_map.merged_dim} symbols, got {y.size}")
    gain = lmmse_gain(snr_linear)
    norm = cfg.power_norm
    estimate = y.with_values(gain * y.values * norm.scale + norm.mean, (y.size,))
    return merge_expand(estimate, cfg.merge_map, shape)
