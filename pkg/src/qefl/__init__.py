"""Deterministic simulator for federated training of sine-layer networks with
per-client Gaussian mutation, best-of-K selection and Gaussian-noised averaging."""

from ._backend import NAME as backend
from .nn import Architecture, init_params

__all__ = ["Architecture", "backend", "init_params"]
__version__ = "0.1.0"
