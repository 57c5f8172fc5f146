import pytest
from hypothesis import settings

from megdt.channel import ChannelSpec, LinkKind
from megdt.codec import Fp16Codec, JsccCodec
from megdt.config import load_scenario
from megdt.pipeline import PipelineModel, StageSpec, case_study_pipeline
from megdt.protocol import MechanismConfig

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def case_study():
    return load_scenario("case_study")


@pytest.fixture(scope="session")
def jscc_codec(case_study) -> JsccCodec:
    return case_study.configs["E2E_MEG"].dl_codec


@pytest.fixture
def small_pipeline() -> PipelineModel:
    return PipelineModel(
        stages=(
            StageSpec("enc", 0.25, 1, "prompt"),
            StageSpec("denoise", 0.5, 4, "seed"),
            StageSpec("dec", 0.75, 1, "image"),
        ),
        split_index=2,
        boundary_shape=(2, 4, 4),
        image_shape=(4, 4, 3),
    )


def links(rate=1e6, snr=10.0, ul_rate=None, dl_rate=None):
    return (ChannelSpec(snr, ul_rate or rate, LinkKind.UL), ChannelSpec(snr, dl_rate or rate, LinkKind.DL))


def mech(kind, scheme="MEG", pipeline=None, codec=None, snr=10.0, rate=1e6, **kw):
    ul, dl = links(rate, snr, kw.pop("ul_rate", None), kw.pop("dl_rate", None))
    codec = codec or Fp16Codec()
    return MechanismConfig(kind, scheme, ul, dl, pipeline or case_study_pipeline(),
                           ul_codec=codec, dl_codec=codec, **kw)
