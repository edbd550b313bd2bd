"""Deterministic simulator for consensus gradient descent with trimmed-mean screening under link attacks."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
