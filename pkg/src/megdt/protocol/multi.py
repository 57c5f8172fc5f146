"""Multi-user generation: individual, decentralized sharing, coordinated fusion.

Every UE first obtains its own feature from the edge server through E2U
delivery.  The modes then differ in what happens before the UE-side stages:

* Individual: nothing; each UE generates from its own feature.
* DecentralizedShared: one synchronous D2D share round with graph neighbours,
  then each UE fuses its own and the received features by averaging.
* CoordinatedFused: every UE uplinks its feature, the ES waits for all of
  them, fuses, runs the generation stages and (optionally) sends the result
  down to every UE.

A neighbour whose share is lost this round contributes its last known
feature if one exists (flagged stale) and is otherwise skipped with a
``missing_feature`` event.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from ..channel import ChannelSpec, LinkKind, tx_latency
from ..codec import Codec
from ..core import DistortionReport, FeatureTensor, RngStream, distortion, psnr_from_mse, substream
from ..errors import InvalidConfigError
from ..pipeline import compute_latency, split_at, synth_boundary_tensor, synth_image_tensor
from .fusion import fuse_mean
from .single import Mechanism, MechanismConfig, run_e2u, run_mechanism
from .timeline import RunMetrics, Timeline, audit_timeline


class MultiUserMode(str, enum.Enum):
    INDIVIDUAL = "Individual"
    DECENTRALIZED = "DecentralizedShared"
    COORDINATED = "CoordinatedFused"


def complete_graph(n: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(j for j in range(n) if j != i) for i in range(n))


def ring_graph(n: int) -> tuple[tuple[int, ...], ...]:
    if n < 3:
        return complete_graph(n)
    return tuple(tuple(sorted({(i - 1) % n, (i + 1) % n})) for i in range(n))


@dataclass(frozen=True)
class MultiUserConfig:
    mode: MultiUserMode
    num_ues: int
    d2d: ChannelSpec
    neighbors: tuple[tuple[int, ...], ...] = ()
    fuse_seconds: float = 0.0
    coordinated_downlink: bool = True
    # per-UE link replacements, e.g. one UE on a slow uplink
    ul_overrides: dict = field(default_factory=dict)
    dl_overrides: dict = field(default_factory=dict)
    # UEs whose D2D share is lost this round
    absent: frozenset = frozenset()
    prior_features: dict = field(default_factory=dict)
    shared_scene: bool = False
    d2d_codec: Codec | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", MultiUserMode(self.mode))
        object.__setattr__(self, "absent", frozenset(self.absent))
        n = int(self.num_ues)
        if n < 1:
            raise InvalidConfigError("num_ues must be >= 1", "multi_user.num_ues")
        nb = tuple(tuple(sorted(set(int(j) for j in row))) for row in self.neighbors) or complete_graph(n)
        if len(nb) != n:
            raise InvalidConfigError(f"neighbor graph has {len(nb)} rows for {n} UEs", "multi_user.neighbors")
        for i, row in enumerate(nb):
            for j in row:
                if not 0 <= j < n or j == i:
                    raise InvalidConfigError(f"UE {i} lists invalid neighbour {j}", "multi_user.neighbors")
                if i not in nb[j]:
                    raise InvalidConfigError(f"neighbour graph is not symmetric at ({i}, {j})",
                                             "multi_user.neighbors")
        for k in (*self.ul_overrides, *self.dl_overrides, *self.absent, *self.prior_features):
            if not 0 <= int(k) < n:
                raise InvalidConfigError(f"UE index {k} out of range", "multi_user")
        if self.fuse_seconds < 0:
            raise InvalidConfigError("fuse_seconds must be >= 0", "multi_user.fuse_seconds")
        object.__setattr__(self, "neighbors", nb)


@dataclass(frozen=True)
class MultiUserResult:
    per_ue: tuple[RunMetrics, ...]
    aggregate: RunMetrics
    events: tuple[tuple[str, int, int], ...] = ()


def _ue_config(mech: MechanismConfig, mu: MultiUserConfig, k: int) -> MechanismConfig:
    return replace(mech, ul=mu.ul_overrides.get(k, mech.ul), dl=mu.dl_overrides.get(k, mech.dl))


def _aggregate(per_ue: list[RunMetrics], peak: float) -> RunMetrics:
    err = math.fsum(m.distortion.mse for m in per_ue) / len(per_ue)
    events = tuple(sorted(((f"ue{k}:{e}", t) for k, m in enumerate(per_ue) for e, t in m.timeline),
                          key=lambda e: e[1]))
    agg = RunMetrics(
        t_tx_s=max(m.t_tx_s for m in per_ue),
        t_compute_s=max(m.t_compute_s for m in per_ue),
        t_e2e_s=max(m.t_e2e_s for m in per_ue),
        payload_bits_ul=sum(m.payload_bits_ul for m in per_ue),
        payload_bits_dl=sum(m.payload_bits_dl for m in per_ue),
        distortion=DistortionReport(err, psnr_from_mse(err, peak), max(m.distortion.per_dim_max_err for m in per_ue)),
        timeline=events,
    )
    audit_timeline(agg)
    return agg


def run_multiuser(mu: MultiUserConfig, mech: MechanismConfig, stream: RngStream) -> MultiUserResult:
    mech.validate()
    n = mu.num_ues
    scene = None
    if mu.shared_scene:
        synth = synth_image_tensor if mech.centralized else synth_boundary_tensor
        scene = synth(mech.pipeline, substream(stream, "scene"))

    if mu.mode is MultiUserMode.INDIVIDUAL or (mu.mode is MultiUserMode.COORDINATED and n == 1):
        per_ue = []
        for k in range(n):
            cfg = _ue_config(mech, mu, k)
            s = substream(stream, f"ue:{k}")
            per_ue.append(run_e2u(cfg, s, scene) if scene is not None and cfg.mechanism is Mechanism.E2U
                          else run_mechanism(cfg, s))
        return MultiUserResult(tuple(per_ue), _aggregate(per_ue, mech.psnr_peak))

    if mech.mechanism is not Mechanism.E2U:
        raise InvalidConfigError(
            f"{mu.mode.value} builds on E2U feature delivery, got {mech.mechanism.value}", "mechanism.kind"
        )
    base = [run_e2u(_ue_config(mech, mu, k), substream(stream, f"ue:{k}"), scene) for k in range(n)]
    if mu.mode is MultiUserMode.DECENTRALIZED:
        per_ue, events = _decentralized(mu, mech, stream, base)
    else:
        per_ue, events = _coordinated(mu, mech, stream, base)
    return MultiUserResult(tuple(per_ue), _aggregate(per_ue, mech.psnr_peak), tuple(events))


def _prefix(tl: Timeline, m: RunMetrics) -> None:
    """Copy a UE's E2U delivery into ``tl`` up to the feature arrival."""
    ready = m.extra["feature_ready_s"]
    prev = 0.0
    for name, t in m.timeline:
        if t > ready or name == "ue_compute":
            continue
        if name in ("ul_request", "dl_feature"):
            tl.transfer(name, prev, t - prev)
        else:
            tl.work(name, prev, t - prev)
        prev = t


def _decentralized(mu, mech, stream, base):
    codec = mu.d2d_codec or mech.dl_codec
    events = []
    per_ue = []
    for j in range(mu.num_ues):
        tl = Timeline()
        _prefix(tl, base[j])
        ready = base[j].extra["feature_ready_s"]
        received = [base[j].artifacts["received"]]
        refs = [base[j].artifacts["reference"]]
        start = ready
        d2d_bits = 0
        for k in mu.neighbors[j]:
            if k in mu.absent:
                if k in mu.prior_features:
                    events.append(("stale_feature", j, k))
                    received.append(mu.prior_features[k])
                    refs.append(mu.prior_features[k])
                else:
                    events.append(("missing_feature", j, k))
                continue
            feat = base[k].artifacts["received"]
            bits = codec.payload_bits(feat.shape)
            d2d_bits += bits
            received.append(codec.send(feat, mu.d2d, substream(stream, f"d2d:{k}->{j}"), mech.digital_mode))
            refs.append(base[k].artifacts["reference"])
            arrival = tl.transfer(f"d2d_from_{k}", base[k].extra["feature_ready_s"], tx_latency(bits, mu.d2d))
            start = max(start, arrival)
        fused = fuse_mean(received)
        t = tl.work("fuse", start, mu.fuse_seconds)
        tl.work("ue_compute", t, base[j].extra["device_compute_s"])
        per_ue.append(tl.finish(
            distortion(fuse_mean(refs), fused, mech.psnr_peak),
            base[j].payload_bits_ul, base[j].payload_bits_dl,
            extra={"payload_bits_d2d": d2d_bits, "sources": len(received)},
            artifacts={"reference": fuse_mean(refs), "received": fused},
        ))
    return per_ue, events


def _coordinated(mu, mech, stream, base):
    ul_codec = mech.ul_codec or mech.dl_codec
    cfgs = [_ue_config(mech, mu, k) for k in range(mu.num_ues)]
    at_es, arrivals, ul_bits = [], [], []
    for k, m in enumerate(base):
        feat = m.artifacts["received"]
        bits = ul_codec.payload_bits(feat.shape)
        ul_bits.append(bits)
        at_es.append(ul_codec.send(feat, cfgs[k].ul, substream(stream, f"ul-share:{k}"), mech.digital_mode))
        arrivals.append(m.extra["feature_ready_s"] + tx_latency(bits, cfgs[k].ul))
    fused = fuse_mean(at_es)
    ref = fuse_mean([m.artifacts["reference"] for m in base])
    t_fuse = max(arrivals) + mu.fuse_seconds
    split = len(mech.pipeline.stages) if mech.centralized else mech.pipeline.split_index
    device_s = compute_latency(split_at(mech.pipeline, split)[1]) / mech.es_speed
    per_ue = []
    for j, m in enumerate(base):
        tl = Timeline()
        _prefix(tl, m)
        tl.transfer("ul_share", m.extra["feature_ready_s"], tx_latency(ul_bits[j], cfgs[j].ul))
        t = tl.work("es_fuse", t_fuse - mu.fuse_seconds, mu.fuse_seconds)
        t = tl.work("es_generate", t, device_s)
        bits_dl = m.payload_bits_dl
        out = fused
        if mu.coordinated_downlink:
            bits = mech.dl_codec.payload_bits(fused.shape)
            bits_dl += bits
            out = mech.dl_codec.send(fused, cfgs[j].dl, substream(stream, f"dl-result:{j}"), mech.digital_mode)
            tl.transfer("dl_result", t, tx_latency(bits, cfgs[j].dl))
        per_ue.append(tl.finish(
            distortion(ref, out, mech.psnr_peak), m.payload_bits_ul + ul_bits[j], bits_dl,
            artifacts={"reference": ref, "received": out},
        ))
    return per_ue, []


def default_d2d(mech: MechanismConfig) -> ChannelSpec:
    """D2D links default to the uplink's rate and SNR."""
    return ChannelSpec(mech.ul.snr_db, mech.ul.rate_bps, LinkKind.D2D)
