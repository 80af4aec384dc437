"""Pilot-aided channel estimation over time-selective Rayleigh fading.

Modules: ``channel`` (fading synthesis), ``framing`` (QPSK frames),
``baselines`` (LS / MMSE), ``nn`` (bidirectional GRU), ``sbgru`` (sliding
estimator, training, evaluation) and ``cli``.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
