"""Split generative pipelines: stage costs, split points and synthetic tensors.

Stage costs are the only thing a stage contributes; no inference happens.  The
case-study costs are back-derived from a 7.58 s compute total that is shared
by all three transport schemes; only that total is constrained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import FeatureTensor, Role, RngStream, _check_shape, gaussian_tensor
from .errors import InvalidConfigError

CASE_STUDY_BOUNDARY = (4, 128, 128)
CASE_STUDY_IMAGE = (1024, 1024, 3)
DENOISING_STEPS = 12


@dataclass(frozen=True)
class StageSpec:
    name: str
    compute_seconds: float
    repeat: int = 1
    output_role: Role = Role.SEED

    def __post_init__(self):
        object.__setattr__(self, "output_role", Role(self.output_role))
        if not (math.isfinite(self.compute_seconds) and self.compute_seconds >= 0):
            raise InvalidConfigError(f"stage {self.name!r}: compute_seconds must be finite and >= 0",
                                     "compute_seconds")
        if int(self.repeat) < 1:
            raise InvalidConfigError(f"stage {self.name!r}: repeat must be >= 1", "repeat")

    @property
    def total_seconds(self) -> float:
        return self.compute_seconds * self.repeat


@dataclass(frozen=True)
class PipelineModel:
    """Ordered stages; ``[0, split_index)`` runs on the edge server, the rest on the device."""

    stages: tuple[StageSpec, ...]
    split_index: int
    boundary_shape: tuple[int, ...]
    image_shape: tuple[int, ...] = CASE_STUDY_IMAGE

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        try:
            object.__setattr__(self, "boundary_shape", _check_shape(self.boundary_shape))
            object.__setattr__(self, "image_shape", _check_shape(self.image_shape))
        except ValueError as exc:
            raise InvalidConfigError(str(exc), "pipeline") from exc
        if not 0 <= self.split_index <= len(self.stages):
            raise InvalidConfigError(f"split_index {self.split_index} outside [0, {len(self.stages)}]",
                                     "pipeline.split_index")
        if 0 < self.split_index < len(self.stages):
            produced = self.stages[self.split_index - 1].output_role
            if produced is Role.IMAGE:
                raise InvalidConfigError(
                    f"stage {self.stages[self.split_index - 1].name!r} emits {produced.value}, "
                    "but a split boundary must carry a feature, not finished content",
                    "pipeline.split_index",
                )

    @property
    def total_compute(self) -> float:
        return compute_latency(self.stages)

    def with_split(self, index: int) -> "PipelineModel":
        return replace(self, split_index=index)


def case_study_pipeline() -> PipelineModel:
    return PipelineModel(
        stages=(
            StageSpec("text_encoder", 0.38, 1, Role.PROMPT),
            StageSpec("denoiser", 0.55, DENOISING_STEPS, Role.SEED),
            StageSpec("vae_decoder", 0.60, 1, Role.IMAGE),
        ),
        split_index=2,
        boundary_shape=CASE_STUDY_BOUNDARY,
        image_shape=CASE_STUDY_IMAGE,
    )


def split_at(p: PipelineModel, index: int) -> tuple[list[StageSpec], list[StageSpec]]:
    if not 0 <= index <= len(p.stages):
        raise InvalidConfigError(f"split index {index} outside [0, {len(p.stages)}]", "split_index")
    return list(p.stages[:index]), list(p.stages[index:])


def compute_latency_exact(part: Sequence[StageSpec]) -> Fraction:
    return sum((Fraction(s.compute_seconds) * s.repeat for s in part), Fraction(0))


def compute_latency(part: Sequence[StageSpec]) -> float:
    return float(compute_latency_exact(part))


def synth_boundary_tensor(p: PipelineModel, stream: RngStream) -> FeatureTensor:
    """Stand-in for the activations crossing the split: i.i.d. standard normal."""
    return gaussian_tensor(p.boundary_shape, stream, Role.SEED)


def synth_image_tensor(p: PipelineModel, stream: RngStream) -> FeatureTensor:
    """Stand-in for a generated image: pixels in [0, 1] around mid-grey."""
    g = gaussian_tensor(p.image_shape, stream, Role.IMAGE)
    return g.with_values(np.clip(0.5 + 0.2 * g.values, 0.0, 1.0))
