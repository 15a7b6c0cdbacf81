"""Time-domain extraction backbone: encoders, separator blocks and decoder."""

from .config import ModelConfig, count_parameters, param_count
from .blocks import (
    DepthConvBlock,
    GlobalLayerNorm,
    SqueezeExciteWeights,
    WeightedMultiDilationBlock,
)
from .network import (
    AudioDecoder,
    AudioEncoder,
    CrossModalFusion,
    EEGEncoder,
    ExtractionNetwork,
    Separator,
    build_network,
)

__all__ = [
    "ModelConfig",
    "param_count",
    "count_parameters",
    "GlobalLayerNorm",
    "DepthConvBlock",
    "SqueezeExciteWeights",
    "WeightedMultiDilationBlock",
    "AudioEncoder",
    "AudioDecoder",
    "EEGEncoder",
    "CrossModalFusion",
    "Separator",
    "ExtractionNetwork",
    "build_network",
]
