"""Weight initialization: Glorot uniform and minibatch variance-preserving rescaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Rng
from .nn import BatchNorm, Network, _Weighted

SCHEMES = ("glorot_uniform", "minibatch_rescale")
MIN_INIT_BATCH = 32


class DegenerateBatchError(ValueError):
    pass


@dataclass
class InitSpec:
    scheme: str = "minibatch_rescale"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown init scheme {self.scheme!r}; choose from {SCHEMES}")


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(layer: _Weighted, rng: Rng):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero bias.

    For LCW layers the free coordinates ``v`` are drawn from the same range.
    """
    a = glorot_limit(layer.fan_in, layer.fan_out)
    p = layer.weight_param
    p.value = rng.uniform(-a, a, p.value.shape)
    layer.b.value = np.zeros_like(layer.b.value)


def _raw_init(layer: _Weighted, rng: Rng):
    p = layer.weight_param
    p.value = rng.uniform(-1.0, 1.0, p.value.shape)
    layer.b.value = np.zeros_like(layer.b.value)


def minibatch_rescale_init(net: Network, batch: np.ndarray, rng: Rng) -> list[float]:
    """Random weights rescaled so each layer's preactivation has unit std on ``batch``.

    Layers are processed in forward order. The std is taken over every entry
    of the preactivation (units x samples), so every weight vector in a layer
    is divided by the same factor and keeps its direction. Batch-norm running
    statistics are left untouched. Returns the divisor used for each layer.
    """
    batch = np.asarray(batch, dtype=np.float64)
    n_samples = batch.shape[-1] if batch.ndim == 2 else batch.shape[0]
    if n_samples == 0:
        raise DegenerateBatchError("initialization batch is empty")

    saved = [(l, l.running_mean.copy(), l.running_var.copy())
             for l in net.layers if isinstance(l, BatchNorm)]
    scales = []
    h = batch
    index = 0
    for layer in net.layers:
        if isinstance(layer, _Weighted):
            _raw_init(layer, rng)
            z = layer.forward(h)
            s = float(z.std())
            if not s >= 1e-12:
                raise DegenerateBatchError(
                    f"preactivation of weighted layer {index} ({layer.kind}) has std {s:.3e} "
                    "on the init batch"
                )
            layer.scale_weight(1.0 / s)
            scales.append(s)
            index += 1
        h = layer.forward(h, train=True)
    for layer, mean, var in saved:
        layer.running_mean, layer.running_var = mean, var
    return scales


def initialize(net: Network, spec: InitSpec, batch: np.ndarray | None = None, rng: Rng | None = None):
    rng = rng if rng is not None else Rng(spec.seed)
    if spec.scheme == "glorot_uniform":
        for layer in net.weighted_layers():
            glorot_init(layer, rng)
        return None
    if batch is None:
        raise ValueError("minibatch_rescale needs a reference batch")
    n = batch.shape[-1] if batch.ndim == 2 else batch.shape[0]
    if n < MIN_INIT_BATCH:
        raise ValueError(f"minibatch_rescale needs at least {MIN_INIT_BATCH} samples, got {n}")
    return minibatch_rescale_init(net, batch, rng)
