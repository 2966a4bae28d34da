"""Multi-stage web bot detection.

Hits pass through rule-based heuristics, a semi-supervised GAN classifier on
single hits, and a graph classifier on the session's web traversal graph.
"""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
