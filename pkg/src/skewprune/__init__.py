"""Skewness-guided structured pruning of a multimodal windowed-attention classifier."""

from .model import ModelConfig, SwinMultimodal, count_flops, count_params, memory_footprint_bytes
from .skew import decide, skewness

__all__ = [
    "ModelConfig",
    "SwinMultimodal",
    "count_flops",
    "count_params",
    "decide",
    "memory_footprint_bytes",
    "skewness",
]
__version__ = "0.1.0"
