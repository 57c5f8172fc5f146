"""Versioned scenario configuration documents.

A document is a JSON tree validated by pydantic models with unknown keys
rejected.  :func:`build_scenario` turns it into a runnable
:class:`~megdt.simkit.Scenario`.  Codecs are declared once under ``codecs``
and bound to links per scheme by name.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .channel import ChannelSpec, DigitalMode, LinkKind
from .codec import (
    FP16_MAX,
    Codec,
    DigitalCodecConfig,
    Fp16Codec,
    JsccCodec,
    JsccCodecConfig,
    PruneCodec,
    SketchCodec,
    SketchConfig,
)
from .core import Role
from .errors import InvalidConfigError
from .pipeline import PipelineModel, StageSpec
from .protocol import Mechanism, MechanismConfig, MultiUserConfig, MultiUserMode, Scheme
from .protocol.multi import default_d2d
from .simkit import Scenario, calibrated_jscc

CONFIG_VERSION = 1
BUNDLED = ("case_study",)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StageDoc(_Model):
    name: str
    compute_seconds: float = Field(ge=0)
    repeat: int = Field(1, ge=1)
    output_role: Role = Role.SEED


class PipelineDoc(_Model):
    stages: list[StageDoc] = Field(min_length=1)
    split_index: int = Field(ge=0)
    boundary_shape: list[int] = Field(min_length=1)
    image_shape: list[int] = Field(min_length=1)


class LinkDoc(_Model):
    rate_bps: Optional[float] = Field(None, gt=0)


class LinksDoc(_Model):
    rate_bps: float = Field(gt=0)
    ul: LinkDoc = LinkDoc()
    dl: LinkDoc = LinkDoc()
    d2d: LinkDoc = LinkDoc()


class Fp16Doc(_Model):
    kind: Literal["fp16"]
    clamp_max: float = Field(FP16_MAX, gt=0, le=FP16_MAX)


class JsccDoc(_Model):
    kind: Literal["jscc"]
    merged_dim: int = Field(ge=1)
    calibration_count: int = Field(4, ge=1)
    calibration_seed: int = Field(0, ge=0, lt=2**64)
    bits_per_symbol: int = Field(16, ge=1)
    # fitted map shipped alongside the config; refitted when absent
    artifact: Optional[str] = None


class PruneDoc(_Model):
    kind: Literal["prune"]
    keep_fraction: float = Field(gt=0, le=1)
    clamp_max: float = Field(FP16_MAX, gt=0, le=FP16_MAX)


class SketchDoc(_Model):
    kind: Literal["sketch"]
    downsample_factor: int = Field(2, ge=1)
    edge_bits: bool = False
    edge_threshold: float = Field(0.5, ge=0)
    clamp_max: float = Field(FP16_MAX, gt=0, le=FP16_MAX)


CodecDoc = Annotated[Union[Fp16Doc, JsccDoc, PruneDoc, SketchDoc], Field(discriminator="kind")]


class BindingDoc(_Model):
    ul: Optional[str] = None
    dl: Optional[str] = None


class MechanismDoc(_Model):
    kind: Mechanism = Mechanism.E2U
    prompt_bits: int = Field(0, ge=0)
    encode_split: int = Field(0, ge=0)
    es_speed: float = Field(1.0, gt=0)
    ue_speed: float = Field(1.0, gt=0)
    gate_alpha: float = Field(0.5, ge=0, le=1)
    gate_seconds: float = Field(0.0, ge=0)
    digital_mode: DigitalMode = DigitalMode.BER
    psnr_peak: float = Field(1.0, gt=0)


class MultiUserDoc(_Model):
    mode: MultiUserMode
    num_ues: int = Field(ge=1)
    neighbors: list[list[int]] = []
    fuse_seconds: float = Field(0.0, ge=0)
    coordinated_downlink: bool = True
    shared_scene: bool = False
    d2d_codec: Optional[str] = None


class ScenarioDoc(_Model):
    name: str = Field(min_length=1)
    snr_db: list[float] = Field(min_length=1)
    repetitions: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    schemes: list[Scheme] = Field(min_length=1)

    @field_validator("snr_db")
    @classmethod
    def _no_nan(cls, v):
        if any(math.isnan(x) for x in v):
            raise ValueError("SNR values must be numbers")
        return v


class ConfigDocument(_Model):
    version: int
    scenario: ScenarioDoc
    links: LinksDoc
    pipeline: PipelineDoc
    mechanism: MechanismDoc = MechanismDoc()
    codecs: dict[str, CodecDoc] = Field(min_length=1)
    bindings: dict[Scheme, BindingDoc]
    multi_user: Optional[MultiUserDoc] = None

    @field_validator("version")
    @classmethod
    def _version(cls, v):
        if v != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {v}, expected {CONFIG_VERSION}")
        return v

    @model_validator(mode="after")
    def _refs(self):
        for scheme in self.scenario.schemes:
            if scheme not in self.bindings:
                raise ValueError(f"scheme {scheme.value} has no entry under bindings")
        for scheme, b in self.bindings.items():
            for side in ("ul", "dl"):
                name = getattr(b, side)
                if name is not None and name not in self.codecs:
                    raise ValueError(f"bindings.{scheme.value}.{side} names unknown codec {name!r}")
        mu = self.multi_user
        if mu is not None and mu.d2d_codec is not None and mu.d2d_codec not in self.codecs:
            raise ValueError(f"multi_user.d2d_codec names unknown codec {mu.d2d_codec!r}")
        return self


def _error_path(err: dict) -> str:
    loc = list(err["loc"])
    if len(loc) > 2 and loc[0] == "codecs":
        del loc[2]  # discriminator tag inserted by pydantic
    return ".".join(str(p) for p in loc)


def parse_document(data: Any) -> ConfigDocument:
    try:
        return ConfigDocument.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise InvalidConfigError(first["msg"], _error_path(first) or "config") from exc


def dump_document(doc: ConfigDocument) -> dict:
    return doc.model_dump(mode="json")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("megdt") / "data" / f"{name}.json"))


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled config such as ``case_study``."""
    p = Path(ref)
    if not p.exists() and ref in BUNDLED:
        return bundled_path(ref)
    return p


def load_document(ref: str) -> tuple[ConfigDocument, Path]:
    path = resolve_config_path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config: {exc.strerror or exc}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}", str(path)) from exc
    return parse_document(data), path.parent


def _coerce(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(doc: ConfigDocument, overrides: list[str]) -> ConfigDocument:
    """Apply ``key=value`` overrides. Bare keys address the ``scenario`` section.

    Values are parsed as JSON when possible, else kept as strings.  A scalar
    ``snr_db`` becomes a one-element list.
    """
    tree = dump_document(doc)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidConfigError(f"override {item!r} is not key=value", "--set")
        parts = key.split(".") if "." in key else ["scenario", key]
        value = _coerce(raw)
        if parts[-1] == "snr_db" and not isinstance(value, list):
            value = [value]
        node = tree
        for i, p in enumerate(parts[:-1]):
            if isinstance(node, list):
                try:
                    node = node[int(p)]
                except (ValueError, IndexError) as exc:
                    raise InvalidConfigError("no such list index", ".".join(parts[: i + 1])) from exc
                continue
            if not isinstance(node, dict):
                raise InvalidConfigError("cannot descend into a scalar", ".".join(parts[: i + 1]))
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
        if isinstance(node, list):
            try:
                node[int(parts[-1])] = value
            except (ValueError, IndexError) as exc:
                raise InvalidConfigError("no such list index", key) from exc
        elif isinstance(node, dict):
            node[parts[-1]] = value
        else:
            raise InvalidConfigError("cannot set a field on a scalar", key)
    return parse_document(tree)


@lru_cache(maxsize=8)
def _load_artifact(path: str) -> JsccCodecConfig:
    try:
        return JsccCodecConfig.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidConfigError(f"cannot read JSCC artifact: {exc.strerror or exc}", path) from exc
    except (ValueError, KeyError) as exc:
        raise InvalidConfigError(f"malformed JSCC artifact: {exc}", path) from exc


def _jscc_config(d: JsccDoc, shape: tuple[int, ...], base_dir: Path, name: str) -> JsccCodecConfig:
    if d.artifact is not None:
        cfg = _load_artifact(str((base_dir / d.artifact).resolve()))
        m = cfg.merge_map
        if m.merged_dim != d.merged_dim or m.original_dim != math.prod(shape):
            raise InvalidConfigError(
                f"artifact maps {m.original_dim} -> {m.merged_dim}, config wants "
                f"{math.prod(shape)} -> {d.merged_dim}",
                f"codecs.{name}.artifact",
            )
        return cfg
    if d.merged_dim > math.prod(shape):
        raise InvalidConfigError(f"merged_dim {d.merged_dim} exceeds boundary size {math.prod(shape)}",
                                 f"codecs.{name}.merged_dim")
    return calibrated_jscc(shape, d.merged_dim, d.calibration_count, d.calibration_seed)


def build_codec(doc: ConfigDocument, name: str, base_dir: Path) -> Codec:
    d = doc.codecs[name]
    if isinstance(d, Fp16Doc):
        return Fp16Codec(DigitalCodecConfig(clamp_max=d.clamp_max))
    if isinstance(d, PruneDoc):
        return PruneCodec(d.keep_fraction, DigitalCodecConfig(clamp_max=d.clamp_max))
    if isinstance(d, SketchDoc):
        return SketchCodec(SketchConfig(d.downsample_factor, d.edge_bits, d.edge_threshold),
                           DigitalCodecConfig(clamp_max=d.clamp_max))
    shape = tuple(doc.pipeline.boundary_shape)
    return JsccCodec(_jscc_config(d, shape, base_dir, name), d.bits_per_symbol)


def build_pipeline(d: PipelineDoc) -> PipelineModel:
    return PipelineModel(
        stages=tuple(StageSpec(s.name, s.compute_seconds, s.repeat, s.output_role) for s in d.stages),
        split_index=d.split_index,
        boundary_shape=tuple(d.boundary_shape),
        image_shape=tuple(d.image_shape),
    )


def build_scenario(doc: ConfigDocument, base_dir: Path | None = None) -> Scenario:
    base_dir = base_dir or Path.cwd()
    pipeline = build_pipeline(doc.pipeline)
    links = doc.links
    snr0 = doc.scenario.snr_db[0]
    ul = ChannelSpec(snr0, links.ul.rate_bps or links.rate_bps, LinkKind.UL)
    dl = ChannelSpec(snr0, links.dl.rate_bps or links.rate_bps, LinkKind.DL)
    m = doc.mechanism
    codecs: dict[str, Codec] = {}

    def codec(name):
        if name is None:
            return None
        if name not in codecs:
            codecs[name] = build_codec(doc, name, base_dir)
        return codecs[name]

    configs = {}
    for scheme in doc.scenario.schemes:
        b = doc.bindings[scheme]
        configs[scheme] = MechanismConfig(
            mechanism=m.kind, scheme=scheme, ul=ul, dl=dl, pipeline=pipeline,
            ul_codec=codec(b.ul), dl_codec=codec(b.dl), prompt_bits=m.prompt_bits,
            encode_split=m.encode_split, es_speed=m.es_speed, ue_speed=m.ue_speed,
            gate_alpha=m.gate_alpha, gate_seconds=m.gate_seconds, digital_mode=m.digital_mode,
            psnr_peak=m.psnr_peak,
        )
    mu = None
    if doc.multi_user is not None:
        md = doc.multi_user
        d2d = default_d2d(configs[doc.scenario.schemes[0]])
        if links.d2d.rate_bps is not None:
            d2d = ChannelSpec(d2d.snr_db, links.d2d.rate_bps, LinkKind.D2D)
        mu = MultiUserConfig(
            mode=md.mode, num_ues=md.num_ues, d2d=d2d,
            neighbors=tuple(tuple(r) for r in md.neighbors), fuse_seconds=md.fuse_seconds,
            coordinated_downlink=md.coordinated_downlink, shared_scene=md.shared_scene,
            d2d_codec=codec(md.d2d_codec),
        )
    s = doc.scenario
    return Scenario(s.name, configs, tuple(s.snr_db), s.repetitions, s.seed, mu, tuple(s.schemes))


def load_scenario(ref: str, overrides: list[str] | None = None, seed: int | None = None) -> Scenario:
    doc, base = load_document(ref)
    sets = list(overrides or [])
    if seed is not None:
        sets.append(f"scenario.seed={int(seed)}")
    if sets:
        doc = apply_overrides(doc, sets)
    return build_scenario(doc, base)
