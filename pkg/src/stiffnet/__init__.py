"""Stiff-circuit waveform synthesis and segment-transformer surrogate modeling."""

__version__ = "0.1.0"

from stiffnet.autodiff import Tensor, no_grad

__all__ = ["Tensor", "no_grad", "__version__"]
