"""Swing-contract pricing by backward dynamic programming, with convex-order checks."""

from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
