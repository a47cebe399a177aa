"""Numeric substrate: checked matrix product, Householder QR, seeded RNG, summaries.

Matrices and 4-D tensors are plain ``numpy.ndarray`` objects with dtype float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUANTILE_LEVELS = (0.01, 0.25, 0.50, 0.75, 0.99)


class ShapeError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def qr_thin(a) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization by Householder reflections.

    Returns ``q`` (rows x cols, orthonormal columns) and ``r`` (cols x cols,
    upper triangular). The signs are normalized so that ``diag(r) > 0``,
    which makes the factorization unique for full-rank input.

    Raises SingularMatrixError if any ``|r_ii| < 1e-12 * ||a||_F``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ShapeError(f"qr_thin needs rows >= cols, got {m}x{n}")
    if n == 0:
        raise ShapeError("qr_thin needs at least one column")

    r = a.copy()
    vs = []
    for k in range(n):
        x = r[k:, k]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            vs.append(None)
            continue
        v = x.copy()
        # sign choice avoids cancellation in v[0]
        v[0] += normx if x[0] >= 0 else -normx
        v /= np.linalg.norm(v)
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        vs.append(v)

    q = np.eye(m, n)
    for k in range(n - 1, -1, -1):
        v = vs[k]
        if v is None:
            continue
        q[k:, :] -= 2.0 * np.outer(v, v @ q[k:, :])

    r = np.triu(r[:n, :])
    tol = 1e-12 * np.linalg.norm(a)
    diag = np.diag(r)
    bad = np.flatnonzero(np.abs(diag) < tol)
    if bad.size:
        raise SingularMatrixError(
            f"matrix is rank deficient: |r[{bad[0]},{bad[0]}]| = {abs(diag[bad[0]]):.3e} "
            f"< {tol:.3e}"
        )
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    variance: float
    quantiles: tuple[float, ...]  # at QUANTILE_LEVELS

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def as_dict(self) -> dict[str, float]:
        out = {"mean": self.mean, "variance": self.variance}
        for level, q in zip(QUANTILE_LEVELS, self.quantiles):
            out[f"q{round(level * 100):02d}"] = q
        return out


def summarize(samples) -> SummaryStats:
    """Mean, population variance and linearly interpolated 1/25/50/75/99% quantiles."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("summarize needs at least one sample")
    mean = float(x.mean())
    var = float(np.mean((x - mean) ** 2))
    qs = np.quantile(x, QUANTILE_LEVELS, method="linear")
    # interpolation rounding can break monotonicity by an ulp
    qs = np.maximum.accumulate(qs)
    return SummaryStats(mean, var, tuple(float(q) for q in qs))


class Rng:
    """Seeded random source with a fixed, platform-independent bit stream.

    Raw bits come from the PCG64 generator (PCG-XSL-RR 128/64, O'Neill 2014)
    seeded through numpy's ``SeedSequence``. Only the raw 64-bit output is
    used; every derived distribution is computed here so that it does not
    depend on numpy's own (version-dependent) sampling routines:

    * uniform(0, 1): ``((x >> 11) + 0.5) * 2**-53`` -- never exactly 0 or 1.
    * normal: Box-Muller on pairs of such uniforms.
    * permutation: stable argsort of uniforms.

    ``stream`` selects an independent sequence for the same seed.
    """

    def __init__(self, seed: int = 0, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        # distinct streams from one seed via the spawn key
        self._bits = np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(int(n)).astype(np.uint64, copy=False)

    def _unit(self, n: int) -> np.ndarray:
        x = self.raw(n) >> np.uint64(11)
        return (x.astype(np.float64) + 0.5) * 2.0**-53

    def uniform(self, lo: float, hi: float, shape) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got lo={lo}, hi={hi}")
        shape = _shape(shape)
        u = self._unit(int(np.prod(shape)))
        return (lo + (hi - lo) * u).reshape(shape)

    def normal(self, mu: float, sigma: float, shape) -> np.ndarray:
        if not sigma > 0:
            raise ValueError(f"normal needs sigma > 0, got {sigma}")
        shape = _shape(shape)
        n = int(np.prod(shape))
        half = (n + 1) // 2
        u = self._unit(2 * half)
        radius = np.sqrt(-2.0 * np.log(u[:half]))
        angle = 2.0 * np.pi * u[half:]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
        return (mu + sigma * z).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self._unit(n), kind="stable")

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers in [0, high) by multiply-shift on 53-bit uniforms."""
        return np.minimum((self._unit(size) * high).astype(np.int64), high - 1)


def _shape(shape) -> tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def rand_uniform(rng: Rng, lo: float, hi: float, shape) -> np.ndarray:
    return rng.uniform(lo, hi, shape)


def rand_normal(rng: Rng, mu: float, sigma: float, shape) -> np.ndarray:
    return rng.normal(mu, sigma, shape)
