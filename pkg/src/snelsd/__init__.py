"""Sequential sentence encoders with latent chunk detection, plus LSTM,
BLSTM and Tree-LSTM baselines, on a small float64 autodiff engine."""

from .tensor import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["Tape", "Tensor", "backward", "__version__"]
