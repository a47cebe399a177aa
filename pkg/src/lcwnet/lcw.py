"""Zero-sum weight subspace and the ``w = B v`` reparameterization.

``B`` is an ``m x (m-1)`` matrix with orthonormal columns that each sum to
zero. It is the Q factor of the thin QR factorization of the spanning set
``[I_{m-1}; -1^T]``. Bases are cached per dimension and shared.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .linalg import ShapeError, qr_thin


@dataclass(frozen=True, eq=False)
class LcwBasis:
    m: int
    basis: np.ndarray = field(repr=False)  # m x (m-1), read-only

    @property
    def free_dim(self) -> int:
        return self.m - 1


@lru_cache(maxsize=None)
def build_basis(m: int) -> LcwBasis:
    m = int(m)
    if m < 2:
        raise ValueError(f"zero-sum subspace is trivial for m={m}; need m >= 2")
    seed = np.vstack([np.eye(m - 1), -np.ones((1, m - 1))])
    q, _ = qr_thin(seed)
    q.setflags(write=False)
    return LcwBasis(m, q)


def kernel_basis(c_in: int, k_h: int, k_w: int) -> LcwBasis:
    """Basis for conv kernels unrolled in (c_in, k_h, k_w) row-major order."""
    m = int(c_in) * int(k_h) * int(k_w)
    if m < 2:
        raise ValueError(f"kernel {c_in}x{k_h}x{k_w} has {m} entries; need at least 2")
    return build_basis(m)


@dataclass(eq=False)
class LcwParam:
    """Free parameter ``v`` of one constrained weight vector."""

    v: np.ndarray
    basis: LcwBasis

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.v.shape != (self.basis.free_dim,):
            raise ShapeError(
                f"v has shape {self.v.shape}, basis for m={self.basis.m} needs ({self.basis.free_dim},)"
            )


def lift(p: LcwParam) -> np.ndarray:
    return p.basis.basis @ p.v


def project(w, basis: LcwBasis | None = None) -> LcwParam:
    """Coordinates of ``w`` in the subspace; drops the component along ``1_m``."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ShapeError(f"project expects a vector, got shape {w.shape}")
    if basis is None:
        basis = build_basis(w.size)
    elif basis.m != w.size:
        raise ShapeError(f"weight has length {w.size}, basis is for m={basis.m}")
    return LcwParam(basis.basis.T @ w, basis)


# Row-stacked forms used by the layers: each row of V / W is one neuron.

def lift_rows(v: np.ndarray, basis: LcwBasis) -> np.ndarray:
    if v.ndim != 2 or v.shape[1] != basis.free_dim:
        raise ShapeError(f"V has shape {v.shape}, expected (n, {basis.free_dim})")
    return v @ basis.basis.T


def project_rows(w: np.ndarray, basis: LcwBasis) -> np.ndarray:
    if w.ndim != 2 or w.shape[1] != basis.m:
        raise ShapeError(f"W has shape {w.shape}, expected (n, {basis.m})")
    return w @ basis.basis
