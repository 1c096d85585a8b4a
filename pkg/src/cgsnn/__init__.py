"""Context-gated spiking networks for two-task lifelong learning."""

from __future__ import annotations

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
