"""Linearly constrained (zero-sum) weights for dense and convolutional layers.

A small numpy deep-learning library: layers with hand-written gradients, the
``w = B v`` reparameterization onto the zero-sum weight subspace, minibatch
variance-preserving initialization, and diagnostics for activation shift and
variance amplification in deep sigmoid networks.
"""
from .lcw import LcwBasis, LcwParam, build_basis, kernel_basis, lift, project
from .linalg import Rng, SummaryStats, matmul, qr_thin, summarize
from .nn import (BatchNorm, Conv2d, Dense, Flatten, Network, ReLU, Sigmoid, build_mlp,
                 softmax_xent)

__version__ = "0.1.0"

__all__ = [
    "LcwBasis", "LcwParam", "build_basis", "kernel_basis", "lift", "project",
    "Rng", "SummaryStats", "matmul", "qr_thin", "summarize",
    "BatchNorm", "Conv2d", "Dense", "Flatten", "Network", "ReLU", "Sigmoid", "build_mlp",
    "softmax_xent",
]
