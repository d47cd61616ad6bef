"""Deterministic background-randomization augmentation for drone pose datasets."""

from .augment import AugParams, Mode, SamplingRanges, augment_sample, sample_params
from .background import BackgroundPool, load_pool, sample_background
from .rng import Purpose, RngStream, derive_substream

__all__ = [
    "AugParams",
    "BackgroundPool",
    "Mode",
    "Purpose",
    "RngStream",
    "SamplingRanges",
    "augment_sample",
    "derive_substream",
    "load_pool",
    "sample_background",
    "sample_params",
]

__version__ = "0.1.0"
