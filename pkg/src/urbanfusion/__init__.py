"""Fusion of wearable arousal signals with urban environment and street-view descriptors."""

from .core import FEATURE_NAMES, Channel, CompiledDataset, SignalStream

__version__ = "0.1.0"

__all__ = ["Channel", "CompiledDataset", "FEATURE_NAMES", "SignalStream", "__version__"]
