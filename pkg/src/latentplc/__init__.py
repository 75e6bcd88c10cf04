"""Error-resilience toolkit for latent-domain frame codecs.

Residual vector quantization with a distilled low-rate codebook, a
causal convolutional index predictor for packet loss concealment, an
in-band FEC packet format and a fixed-delay jitter buffer, wrapped
around a deterministic cosine-basis frame codec.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
