"""Single-user generation mechanisms between one edge server and one device.

E2U   ES runs the front of the pipeline and sends features down to the UE.
U2E   the UE encodes and sends features up; the ES finishes generation.
SEU   UE encode -> uplink -> ES compute -> downlink -> UE decode.
PEU   both sides encode and exchange features at once, fuse them with
      identical gate copies, then each generates its own content.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from ..channel import ChannelSpec, DigitalMode, LinkKind, tx_latency
from ..codec import Codec, Fp16Codec
from ..core import FeatureTensor, RngStream, distortion, mse, substream
from ..errors import InvalidConfigError
from ..pipeline import PipelineModel, compute_latency, split_at, synth_boundary_tensor, synth_image_tensor
from .fusion import FeatureGate, gate_fuse
from .timeline import RunMetrics, Timeline


class Mechanism(str, enum.Enum):
    E2U = "E2U"
    U2E = "U2E"
    SEU = "SEU"
    PEU = "PEU"


class Scheme(str, enum.Enum):
    CENTRALIZED = "Centralized"
    MEG = "MEG"
    E2E_MEG = "E2E_MEG"


@dataclass(frozen=True)
class MechanismConfig:
    mechanism: Mechanism
    scheme: Scheme
    ul: ChannelSpec
    dl: ChannelSpec
    pipeline: PipelineModel
    ul_codec: Codec | None = None
    dl_codec: Codec | None = None
    prompt_bits: int = 0
    # SEU only: the UE runs stages [0, encode_split) before the uplink
    encode_split: int = 0
    es_speed: float = 1.0
    ue_speed: float = 1.0
    gate_alpha: float = 0.5
    gate_seconds: float = 0.0
    digital_mode: DigitalMode = DigitalMode.BER
    psnr_peak: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "digital_mode", DigitalMode(self.digital_mode))
        if self.prompt_bits < 0:
            raise InvalidConfigError("prompt_bits must be >= 0", "mechanism.prompt_bits")
        if not (self.es_speed > 0 and self.ue_speed > 0):
            raise InvalidConfigError("speed factors must be > 0", "mechanism.es_speed")
        if not 0 <= self.gate_alpha <= 1:
            raise InvalidConfigError("gate_alpha must lie in [0, 1]", "mechanism.gate_alpha")
        if self.gate_seconds < 0:
            raise InvalidConfigError("gate_seconds must be >= 0", "mechanism.gate_seconds")

    @property
    def centralized(self) -> bool:
        return self.scheme is Scheme.CENTRALIZED

    def payload_shape(self) -> tuple[int, ...]:
        return self.pipeline.image_shape if self.centralized else self.pipeline.boundary_shape

    def with_snr(self, snr_db: float) -> "MechanismConfig":
        return replace(self, ul=self.ul.with_snr(snr_db), dl=self.dl.with_snr(snr_db))

    def validate(self) -> None:
        """Check codec bindings and split points for this mechanism."""
        shape = self.payload_shape()
        needs = {
            Mechanism.E2U: ("dl_codec",),
            Mechanism.U2E: ("ul_codec",),
            Mechanism.SEU: ("ul_codec", "dl_codec"),
            Mechanism.PEU: ("ul_codec", "dl_codec"),
        }[self.mechanism]
        for name in needs:
            codec = getattr(self, name)
            if codec is None:
                raise InvalidConfigError(f"{self.mechanism.value} needs a {name} binding", f"mechanism.{name}")
            if self.centralized and not isinstance(codec, Fp16Codec):
                raise InvalidConfigError("the centralized scheme sends raw fp16 images", f"mechanism.{name}")
            codec.check(shape)
        n = len(self.pipeline.stages)
        split = self.pipeline.split_index
        if not self.centralized and self.mechanism is not Mechanism.SEU and not 0 < split < n:
            raise InvalidConfigError(
                f"{self.mechanism.value} needs stages on both sides of the split, got split {split} of {n}",
                "pipeline.split_index",
            )
        if self.mechanism is Mechanism.SEU and not self.centralized and not 0 <= self.encode_split <= split:
            raise InvalidConfigError(f"encode_split must lie in [0, {split}]", "mechanism.encode_split")


def source_tensor(cfg: MechanismConfig, stream: RngStream) -> FeatureTensor:
    """Noiseless tensor a run transports: the generated image or the split-point feature."""
    if cfg.centralized:
        return synth_image_tensor(cfg.pipeline, substream(stream, "image"))
    return synth_boundary_tensor(cfg.pipeline, substream(stream, "boundary"))


def _compute(stages, speed: float) -> float:
    return compute_latency(stages) / speed


def _airtime(codec: Codec, shape, ch: ChannelSpec) -> tuple[int, float]:
    bits = codec.payload_bits(shape)
    return bits, tx_latency(bits, ch)


def run_e2u(cfg: MechanismConfig, stream: RngStream, source: FeatureTensor | None = None) -> RunMetrics:
    cfg.validate()
    stages = cfg.pipeline.stages
    server, device = split_at(cfg.pipeline, len(stages) if cfg.centralized else cfg.pipeline.split_index)
    ref = source if source is not None else source_tensor(cfg, stream)
    tl = Timeline()
    t = tl.transfer("ul_request", 0.0, tx_latency(cfg.prompt_bits, cfg.ul))
    t = tl.work("es_compute", t, _compute(server, cfg.es_speed))
    bits_dl, air = _airtime(cfg.dl_codec, ref.shape, cfg.dl)
    rx = cfg.dl_codec.send(ref, cfg.dl, substream(stream, "dl"), cfg.digital_mode)
    t = ready = tl.transfer("dl_feature", t, air)
    tl.work("ue_compute", t, _compute(device, cfg.ue_speed))
    return tl.finish(
        distortion(ref, rx, cfg.psnr_peak), cfg.prompt_bits, bits_dl,
        extra={"feature_ready_s": ready, "device_compute_s": _compute(device, cfg.ue_speed)},
        artifacts={"reference": ref, "received": rx},
    )


def run_u2e(cfg: MechanismConfig, stream: RngStream, source: FeatureTensor | None = None) -> RunMetrics:
    cfg.validate()
    device, server = split_at(cfg.pipeline, 0 if cfg.centralized else cfg.pipeline.split_index)
    ref = source if source is not None else source_tensor(cfg, stream)
    tl = Timeline()
    t = tl.transfer("dl_request", 0.0, tx_latency(cfg.prompt_bits, cfg.dl))
    t = tl.work("ue_compute", t, _compute(device, cfg.ue_speed))
    bits_ul, air = _airtime(cfg.ul_codec, ref.shape, cfg.ul)
    rx = cfg.ul_codec.send(ref, cfg.ul, substream(stream, "ul"), cfg.digital_mode)
    t = tl.transfer("ul_feature", t, air)
    tl.work("es_compute", t, _compute(server, cfg.es_speed))
    return tl.finish(distortion(ref, rx, cfg.psnr_peak), bits_ul, cfg.prompt_bits,
                     artifacts={"reference": ref, "received": rx})


def run_seu(cfg: MechanismConfig, stream: RngStream, source: FeatureTensor | None = None) -> RunMetrics:
    cfg.validate()
    stages = cfg.pipeline.stages
    if cfg.centralized:
        enc, split = 0, len(stages)
    else:
        enc, split = cfg.encode_split, cfg.pipeline.split_index
    ref = source if source is not None else source_tensor(cfg, stream)
    tl = Timeline()
    t = tl.work("ue_encode", 0.0, _compute(stages[:enc], cfg.ue_speed))
    bits_ul, air_ul = _airtime(cfg.ul_codec, ref.shape, cfg.ul)
    at_es = cfg.ul_codec.send(ref, cfg.ul, substream(stream, "ul"), cfg.digital_mode)
    t = tl.transfer("ul_feature", t, air_ul)
    t = tl.work("es_compute", t, _compute(stages[enc:split], cfg.es_speed))
    bits_dl, air_dl = _airtime(cfg.dl_codec, ref.shape, cfg.dl)
    at_ue = cfg.dl_codec.send(at_es, cfg.dl, substream(stream, "dl"), cfg.digital_mode)
    t = tl.transfer("dl_feature", t, air_dl)
    tl.work("ue_decode", t, _compute(stages[split:], cfg.ue_speed))
    return tl.finish(
        distortion(ref, at_ue, cfg.psnr_peak), bits_ul, bits_dl,
        extra={"ul_hop_mse": mse(ref, at_es)},
        artifacts={"reference": ref, "at_es": at_es, "received": at_ue},
    )


def run_peu(cfg: MechanismConfig, stream: RngStream, gate: FeatureGate | None = None,
            inputs: tuple[FeatureTensor, FeatureTensor] | None = None) -> RunMetrics:
    """Parallel exchange. ``inputs`` overrides the (ES, UE) local features.

    Each side fuses with the gate oriented the same way (alpha weights the ES
    feature), using the error-free reconstruction of its own feature, so both
    sides hold bit-identical fused tensors whenever the links deliver exactly.
    """
    cfg.validate()
    stages = cfg.pipeline.stages
    encode, generate = split_at(cfg.pipeline, len(stages) if cfg.centralized else cfg.pipeline.split_index)
    if inputs is None:
        x_es = source_tensor(cfg, substream(stream, "es"))
        x_ue = source_tensor(cfg, substream(stream, "ue"))
    else:
        x_es, x_ue = inputs
    gate = gate or FeatureGate.uniform(x_es.shape, cfg.gate_alpha)
    if gate.alpha.shape != x_es.shape or x_ue.shape != x_es.shape:
        raise InvalidConfigError(
            f"gate shape {list(gate.alpha.shape)} does not match features {list(x_es.shape)}", "gate"
        )
    tl = Timeline()
    es_enc = tl.work("es_encode", 0.0, _compute(encode, cfg.es_speed))
    ue_enc = tl.work("ue_encode", 0.0, _compute(encode, cfg.ue_speed))
    bits_dl, air_dl = _airtime(cfg.dl_codec, x_es.shape, cfg.dl)
    bits_ul, air_ul = _airtime(cfg.ul_codec, x_ue.shape, cfg.ul)
    at_ue = cfg.dl_codec.send(x_es, cfg.dl, substream(stream, "dl"), cfg.digital_mode)
    at_es = cfg.ul_codec.send(x_ue, cfg.ul, substream(stream, "ul"), cfg.digital_mode)
    dl_arrival = tl.transfer("dl_feature", es_enc, air_dl)
    ul_arrival = tl.transfer("ul_feature", ue_enc, air_ul)
    es_fused = gate_fuse(cfg.dl_codec.ideal(x_es), at_es, gate)
    ue_fused = gate_fuse(at_ue, cfg.ul_codec.ideal(x_ue), gate)
    es_f = tl.work("es_fuse", max(es_enc, ul_arrival), cfg.gate_seconds)
    ue_f = tl.work("ue_fuse", max(ue_enc, dl_arrival), cfg.gate_seconds)
    es_done = tl.work("es_generate", es_f, _compute(generate, cfg.es_speed))
    ue_done = tl.work("ue_generate", ue_f, _compute(generate, cfg.ue_speed))
    ref = gate_fuse(x_es, x_ue, gate)
    es_dist = distortion(ref, es_fused, cfg.psnr_peak)
    return tl.finish(
        distortion(ref, ue_fused, cfg.psnr_peak), bits_ul, bits_dl,
        extra={
            "es_done_s": es_done,
            "ue_done_s": ue_done,
            "es_mse": es_dist.mse,
            "shared_view": es_fused == ue_fused,
        },
        artifacts={"reference": ref, "es_fused": es_fused, "ue_fused": ue_fused},
    )


def run_mechanism(cfg: MechanismConfig, stream: RngStream) -> RunMetrics:
    runner = {
        Mechanism.E2U: run_e2u,
        Mechanism.U2E: run_u2e,
        Mechanism.SEU: run_seu,
        Mechanism.PEU: run_peu,
    }[cfg.mechanism]
    return runner(cfg, stream)


def default_links(rate_bps: float, snr_db: float) -> tuple[ChannelSpec, ChannelSpec]:
    return ChannelSpec(snr_db, rate_bps, LinkKind.UL), ChannelSpec(snr_db, rate_bps, LinkKind.DL)
