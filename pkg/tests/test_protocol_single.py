import math
from dataclasses import dataclass, replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mech
from megdt.channel import ChannelSpec
from megdt.codec import Codec, Fp16Codec, fp16_roundtrip
from megdt.codec.digital import DigitalCodecConfig
from megdt.core import FeatureTensor, RngStream, gaussian_tensor, mse
from megdt.errors import InvalidConfigError
from megdt.pipeline import compute_latency, split_at
from megdt.protocol import (
    FeatureGate,
    audit_timeline,
    fuse_mean,
    gate_fuse,
    run_e2u,
    run_mechanism,
    run_peu,
    run_seu,
    run_u2e,
    source_tensor,
)
from megdt.protocol.timeline import RunMetrics, TimelineError

PAPER = {"Centralized": (50.33, 57.91), "MEG": (1.05, 8.63), "E2E_MEG": (0.58, 8.16)}


@dataclass(frozen=True)
class FreeCodec(Codec):
    """Zero-bit, lossless binding for accounting edge cases."""

    kind = "free"

    def payload_bits(self, shape):
        return 0

    def send(self, t, ch, stream, mode=None):
        return t

    def ideal(self, t):
        return t


def T(xs):
    return FeatureTensor.from_array(np.asarray(xs, float))


@pytest.mark.parametrize("scheme", list(PAPER))
def test_e2u_case_study_latencies(case_study, scheme):
    m = run_e2u(case_study.configs[scheme], RngStream(1))
    tx, e2e = PAPER[scheme]
    assert m.t_tx_s == pytest.approx(tx, abs=0.01)
    assert m.t_e2e_s == pytest.approx(e2e, abs=0.02)
    assert m.t_compute_s == pytest.approx(7.58)
    assert [e for e, _ in m.timeline] == ["ul_request", "es_compute", "dl_feature", "ue_compute"]


def test_high_snr_distortion_ordering(case_study):
    # mean over repetitions: MEG sees only ~4 flips per run at 10 dB
    reps = {"Centralized": 3, "MEG": 40, "E2E_MEG": 40}
    errs = {s: np.mean([run_e2u(case_study.configs[s].with_snr(10.0), RngStream(3, i)).distortion.mse
                        for i in range(n)]) for s, n in reps.items()}
    assert errs["Centralized"] <= errs["MEG"] <= errs["E2E_MEG"]


def test_low_snr_analog_beats_digital(case_study):
    for snr in (-10.0, -5.0):
        meg = run_e2u(case_study.configs["MEG"].with_snr(snr), RngStream(4)).distortion.mse
        e2e = run_e2u(case_study.configs["E2E_MEG"].with_snr(snr), RngStream(4)).distortion.mse
        assert e2e < meg


def test_centralized_measures_image_space(case_study):
    m = run_e2u(case_study.configs["Centralized"], RngStream(2))
    assert m.artifacts["reference"].shape == (1024, 1024, 3)
    assert m.payload_bits_dl == 50_331_648


def test_u2e_mirrors_e2u(small_pipeline):
    cfg = mech("E2U", pipeline=small_pipeline, prompt_bits=64)
    a = run_e2u(cfg, RngStream(5))
    b = run_u2e(replace(cfg, mechanism="U2E"), RngStream(5))
    assert a.t_e2e_s == b.t_e2e_s
    assert (a.payload_bits_ul, a.payload_bits_dl) == (b.payload_bits_dl, b.payload_bits_ul)


def test_u2e_halved_uplink_doubles_the_uplink_term(small_pipeline):
    cfg = mech("U2E", pipeline=small_pipeline)
    fast = run_u2e(cfg, RngStream(5))
    slow = run_u2e(replace(cfg, ul=ChannelSpec(cfg.ul.snr_db, cfg.ul.rate_bps / 2, cfg.ul.kind)), RngStream(5))
    air = dict(fast.timeline)["ul_feature"] - dict(fast.timeline)["ue_compute"]
    air_slow = dict(slow.timeline)["ul_feature"] - dict(slow.timeline)["ue_compute"]
    assert air_slow == pytest.approx(2 * air, rel=1e-12)
    assert slow.t_tx_s == 2 * fast.t_tx_s


def test_meg_at_20db_is_the_fp16_floor(case_study):
    cfg = case_study.configs["MEG"].with_snr(20.0)
    m = run_u2e(replace(cfg, mechanism="U2E"), RngStream(8))
    ref = m.artifacts["reference"]
    assert m.distortion.mse == mse(ref, fp16_roundtrip(ref, cfg.ul_codec.cfg))


def test_meg_at_10db_corruption_is_bounded(case_study):
    cfg = case_study.configs["MEG"]
    clamp = cfg.dl_codec.cfg.clamp_max
    m = run_e2u(cfg, RngStream(9))
    ref = m.artifacts["reference"]
    floor = mse(ref, fp16_roundtrip(ref, cfg.dl_codec.cfg))
    n_bits = m.payload_bits_dl
    p = 3.87e-6
    worst_flips = n_bits * p + 6 * math.sqrt(n_bits * p)
    assert m.distortion.mse <= floor + worst_flips * (2 * clamp) ** 2 / ref.size


def test_seu_latency_is_sum_of_five_terms(small_pipeline):
    cfg = mech("SEU", pipeline=small_pipeline, encode_split=1, ul_rate=2e3, dl_rate=5e3)
    m = run_seu(cfg, RngStream(1))
    st_ = small_pipeline.stages
    bits = 32 * 16
    terms = [compute_latency(st_[:1]), bits / 2e3, compute_latency(st_[1:2]), bits / 5e3, compute_latency(st_[2:])]
    total = 0.0
    for t in terms:
        total += t
    assert m.t_e2e_s == total
    assert [e for e, _ in m.timeline] == ["ue_encode", "ul_feature", "es_compute", "dl_feature", "ue_decode"]
    audit_timeline(m, sequential=True)


def test_seu_noiseless_composes_floors(case_study):
    cfg = replace(case_study.configs["E2E_MEG"].with_snr(math.inf), mechanism="SEU")
    m = run_seu(cfg, RngStream(2))
    ref = m.artifacts["reference"]
    composed = cfg.dl_codec.ideal(cfg.ul_codec.ideal(ref))
    assert m.extra["ul_hop_mse"] == mse(ref, cfg.ul_codec.ideal(ref))
    assert m.distortion.mse == mse(ref, composed)


def test_seu_zero_bit_payloads(small_pipeline):
    cfg = mech("SEU", pipeline=small_pipeline, codec=FreeCodec())
    m = run_seu(cfg, RngStream(1))
    assert m.t_e2e_s == pytest.approx(small_pipeline.total_compute)
    assert m.t_tx_s == 0 and m.distortion.mse == 0


def test_peu_identical_inputs_are_fixed_points(small_pipeline):
    x = fp16_roundtrip(gaussian_tensor(small_pipeline.boundary_shape, RngStream(1)))
    for alpha in (0.0, 0.3, 1.0):
        cfg = mech("PEU", pipeline=small_pipeline, snr=math.inf, gate_alpha=alpha)
        m = run_peu(cfg, RngStream(2), inputs=(x, x))
        assert m.artifacts["es_fused"] == x and m.artifacts["ue_fused"] == x


@given(st.floats(0, 1), st.integers(0, 2**32))
def test_peu_shared_view(alpha, seed):
    from megdt.pipeline import PipelineModel, StageSpec
    p = PipelineModel((StageSpec("a", 0.1), StageSpec("b", 0.2)), 1, (3, 4))
    cfg = mech("PEU", pipeline=p, snr=math.inf, gate_alpha=alpha)
    m = run_peu(cfg, RngStream(seed))
    assert m.extra["shared_view"]
    assert m.artifacts["es_fused"] == m.artifacts["ue_fused"]


def test_peu_symmetric_sides_finish_together(small_pipeline):
    m = run_peu(mech("PEU", pipeline=small_pipeline, gate_seconds=0.05), RngStream(3))
    assert m.extra["es_done_s"] == m.extra["ue_done_s"] == m.t_e2e_s


def test_peu_slow_uplink_dominates(small_pipeline):
    cfg = mech("PEU", pipeline=small_pipeline, gate_seconds=0.05, ul_rate=1e2, dl_rate=1e3)
    m = run_peu(cfg, RngStream(3))
    enc, gen = split_at(small_pipeline, small_pipeline.split_index)
    expected = compute_latency(enc) + 32 * 16 / 1e2 + 0.05 + compute_latency(gen)
    assert m.t_e2e_s == pytest.approx(expected, rel=1e-12)
    assert m.extra["es_done_s"] == m.t_e2e_s > m.extra["ue_done_s"]


def test_peu_gate_shape_mismatch(small_pipeline):
    with pytest.raises(InvalidConfigError):
        run_peu(mech("PEU", pipeline=small_pipeline), RngStream(1), gate=FeatureGate.uniform((5,)))


def test_gate_and_mean_examples():
    a, b = T([1.0, 2.0]), T([3.0, -4.0])
    assert gate_fuse(a, b, FeatureGate.uniform((2,), 1.0)) == a
    assert gate_fuse(a, b, FeatureGate.uniform((2,), 0.0)) == b
    assert gate_fuse(a, a, FeatureGate.uniform((2,), 0.37)) == a
    assert fuse_mean([a]) == a
    assert fuse_mean([a, a, a]) == a
    assert fuse_mean([T([0, 0]), T([2, 2])]) == T([1, 1])
    with pytest.raises(ValueError):
        fuse_mean([])
    with pytest.raises(ValueError):
        FeatureGate.uniform((2,), 1.5)


@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=6), st.randoms())
def test_fuse_mean_permutation_invariant(rows, rnd):
    feats = [T(r) for r in rows]
    shuffled = feats[:]
    rnd.shuffle(shuffled)
    assert fuse_mean(feats) == fuse_mean(shuffled)


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
       st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_gate_is_convex(x, y, a):
    out = gate_fuse(T(x), T(y), FeatureGate(T(a))).values
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    assert np.all(out >= lo - 1e-9 * np.abs(lo)) and np.all(out <= hi + 1e-9 * np.abs(hi))


def test_mechanism_validation(small_pipeline, case_study):
    with pytest.raises(InvalidConfigError):
        replace(mech("E2U", pipeline=small_pipeline), dl_codec=None).validate()
    with pytest.raises(InvalidConfigError):
        mech("E2U", pipeline=small_pipeline.with_split(0)).validate()
    with pytest.raises(InvalidConfigError):
        mech("SEU", pipeline=small_pipeline, encode_split=3).validate()
    with pytest.raises(InvalidConfigError):
        mech("E2U", pipeline=small_pipeline, gate_alpha=2.0)
    with pytest.raises(InvalidConfigError):
        replace(case_study.configs["Centralized"], dl_codec=case_study.configs["E2E_MEG"].dl_codec).validate()


def test_timeline_audit_rejects_inconsistent_metrics():
    from megdt.core import DistortionReport
    bad = RunMetrics(1.0, 1.0, 2.0, 0, 0, DistortionReport.zero(), (("a", 1.0), ("b", 0.5)))
    with pytest.raises(TimelineError):
        audit_timeline(bad)
    with pytest.raises(TimelineError):
        audit_timeline(replace(bad, timeline=(("a", 1.0), ("b", 1.5))))
    with pytest.raises(TimelineError):
        audit_timeline(replace(bad, t_e2e_s=0.5, timeline=(("a", 0.5),)), sequential=True)


@pytest.mark.parametrize("kind", ["E2U", "U2E", "SEU", "PEU"])
def test_every_mechanism_is_deterministic(small_pipeline, kind):
    cfg = mech(kind, pipeline=small_pipeline, snr=0.0)
    a, b = run_mechanism(cfg, RngStream(6)), run_mechanism(cfg, RngStream(6))
    assert a == b
    assert source_tensor(cfg, RngStream(6)) == source_tensor(cfg, RngStream(6))
