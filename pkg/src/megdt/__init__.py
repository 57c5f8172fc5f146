"""Simulator for split generative pipelines over noisy edge links."""

from .channel import BitPayload, ChannelSpec, DigitalMode, LinkKind, ber_bpsk, transmit_analog, transmit_bits
from .core import DistortionReport, FeatureTensor, Role, RngStream, distortion, mse, psnr, substream
from .errors import InvalidConfigError, MegdtError
from .pipeline import PipelineModel, StageSpec, case_study_pipeline
from .protocol import Mechanism, MechanismConfig, MultiUserConfig, MultiUserMode, RunMetrics, Scheme
from .simkit import RunRecord, Scenario, compare_schemes, run_scenario, sweep_snr

__version__ = "0.1.0"

__all__ = [
    "BitPayload",
    "ChannelSpec",
    "DigitalMode",
    "DistortionReport",
    "FeatureTensor",
    "InvalidConfigError",
    "LinkKind",
    "Mechanism",
    "MechanismConfig",
    "MegdtError",
    "MultiUserConfig",
    "MultiUserMode",
    "PipelineModel",
    "RngStream",
    "Role",
    "RunMetrics",
    "RunRecord",
    "Scenario",
    "Scheme",
    "StageSpec",
    "ber_bpsk",
    "case_study_pipeline",
    "compare_schemes",
    "distortion",
    "mse",
    "psnr",
    "run_scenario",
    "substream",
    "sweep_snr",
    "transmit_analog",
    "transmit_bits",
]
