import math

import numpy as np
import pytest

from megdt.channel import ChannelSpec, snr_db_to_linear
from megdt.codec import (
    JsccCodec,
    JsccCodecConfig,
    MergeMap,
    PowerNorm,
    fit_jscc,
    jscc_decode,
    jscc_encode,
    lmmse_gain,
)
from megdt.config import load_document
from megdt.core import FeatureTensor, RngStream, gaussian_tensor, mse, substream
from megdt.errors import DomainError, InvalidConfigError, ShapeMismatchError
from megdt.simkit import calibrated_jscc


def identity_cfg(n, mean=0.0, scale=1.0):
    return JsccCodecConfig(MergeMap.identity(n), PowerNorm(mean, scale))


def test_power_norm_guards():
    with pytest.raises(InvalidConfigError):
        PowerNorm(0.0, 0.0)
    with pytest.raises(InvalidConfigError):
        PowerNorm(math.nan, 1.0)


def test_constant_input_at_mean_encodes_to_zero():
    cfg = identity_cfg(5, mean=2.5, scale=3.0)
    y = jscc_encode(FeatureTensor((5,), np.full(5, 2.5)), cfg)
    assert np.all(y.values == 0)


def test_noiseless_identity_roundtrip():
    cfg = identity_cfg(100, mean=0.3, scale=1.7)
    x = gaussian_tensor([100], RngStream(1))
    back = jscc_decode(jscc_encode(x, cfg), cfg, math.inf)
    np.testing.assert_allclose(back.values, x.values, rtol=0, atol=1e-12)


def clustered(stream, n=3000, clusters=2000):
    """Dims share a latent per cluster, so groupings fitted on one draw carry over."""
    g = stream.generator()
    label = np.random.default_rng(0).integers(0, clusters, n)
    z = g.standard_normal(clusters)[label] + 0.01 * g.standard_normal(n)
    return FeatureTensor((n,), 2.0 + 0.5 * z)


def test_encoded_power_is_unit_on_calibration_distribution():
    root = RngStream(3)
    cal = [clustered(substream(root, str(i))) for i in range(8)]
    cfg = fit_jscc(cal, 2000)
    power = np.mean([np.mean(jscc_encode(t, cfg).values ** 2) for t in cal])
    assert power == pytest.approx(1.0, rel=1e-9)
    y = np.concatenate([jscc_encode(clustered(substream(root, f"fresh{i}")), cfg).values for i in range(5)])
    assert y.size == 10**4
    assert np.mean(y**2) == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("snr", [0.1, 1.0, 10.0])
def test_lmmse_mse_closed_form(snr):
    n = 10**5
    cfg = identity_cfg(n)
    codec = JsccCodec(cfg)
    x = gaussian_tensor([n], RngStream(5))
    ch = ChannelSpec(10 * math.log10(snr))
    got = mse(x, codec.send(x, ch, RngStream(6)))
    assert got == pytest.approx(1 / (1 + snr), rel=0.03)


def test_gain_domain():
    assert lmmse_gain(math.inf) == 1.0
    assert lmmse_gain(1.0) == 0.5
    with pytest.raises(DomainError):
        lmmse_gain(0.0)


def test_dimension_checks():
    cfg = identity_cfg(4)
    with pytest.raises(ShapeMismatchError):
        jscc_encode(gaussian_tensor([5], RngStream(1)), cfg)
    with pytest.raises(ShapeMismatchError):
        jscc_decode(gaussian_tensor([3], RngStream(1)), cfg, 1.0)


def test_error_decreases_to_merge_floor(jscc_codec):
    x = gaussian_tensor([4, 128, 128], RngStream(77))
    floor = mse(x, jscc_codec.ideal(x))
    errs = [mse(x, jscc_codec.send(x, ChannelSpec(v), RngStream(8))) for v in (-5, 0, 10, 20, 40)]
    assert all(e >= floor for e in errs)
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] == pytest.approx(floor, rel=1e-3)


def test_iid_error_model(jscc_codec):
    # fresh i.i.d. sources: group means have variance 1/k, normalisation comes from calibration
    x = gaussian_tensor([4, 128, 128], RngStream(12))
    cfg = jscc_codec.cfg
    frac = cfg.merge_map.merged_dim / cfg.merge_map.original_dim
    s2, mu = cfg.power_norm.scale ** 2, cfg.power_norm.mean
    for snr_db in (-10, 0, 10):
        g = snr_db_to_linear(snr_db)
        gain = g / (1 + g)
        expected = (1 - frac) + (1 - gain) ** 2 * (frac + mu * mu) + gain**2 * s2 / g
        got = mse(x, jscc_codec.send(x, ChannelSpec(snr_db), RngStream(13)))
        assert got == pytest.approx(expected, rel=0.03)


def test_config_artifact_roundtrip(jscc_codec):
    cfg = jscc_codec.cfg
    back = JsccCodecConfig.loads(cfg.dumps())
    assert back.merge_map == cfg.merge_map and back.power_norm == cfg.power_norm
    with pytest.raises(InvalidConfigError):
        JsccCodecConfig.from_dict({**cfg.to_dict(), "format": "other"})


def test_bundled_artifact_equals_fresh_fit(jscc_codec):
    doc, _ = load_document("case_study")
    d = doc.codecs["jscc_latent"]
    fresh = calibrated_jscc(tuple(doc.pipeline.boundary_shape), d.merged_dim, d.calibration_count,
                            d.calibration_seed)
    assert fresh.merge_map == jscc_codec.cfg.merge_map
    assert fresh.power_norm == jscc_codec.cfg.power_norm


def test_payload_is_value_independent(jscc_codec):
    assert jscc_codec.payload_bits((4, 128, 128)) == 36_250 * 16
    with pytest.raises(InvalidConfigError):
        jscc_codec.payload_bits((4, 64, 64))
