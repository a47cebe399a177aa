"""Layers with hand-written forward/backward passes.

Conventions:

* Fully connected activations are ``(features, batch)`` matrices, one sample
  per column, so a dense layer computes ``z = W a + b``.
* Convolutional activations are ``(batch, channels, height, width)`` tensors.
* ``backward`` *accumulates* into parameter gradients; call
  ``Network.zero_grad`` between steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lcw import LcwBasis, build_basis, kernel_basis, lift_rows, project_rows
from .linalg import ShapeError


class BackwardBeforeForward(RuntimeError):
    pass


@dataclass(eq=False)
class Param:
    name: str
    value: np.ndarray
    decay: bool = True  # weight decay applies

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class Layer:
    kind = "layer"

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"type": self.kind}


class _Weighted(Layer):
    """Shared machinery for dense and conv layers (standard or LCW)."""

    lcw: bool
    basis: LcwBasis | None

    def _setup_weight(self, n_out: int, fan: int, lcw: bool, basis: LcwBasis | None):
        self.lcw = bool(lcw)
        self.basis = basis if lcw else None
        if self.lcw:
            self.v = Param("v", np.zeros((n_out, fan - 1)))
        else:
            self.w = Param("w", np.zeros((n_out, fan)))
        self.b = Param("b", np.zeros(n_out), decay=False)
        self.out = None       # last preactivation
        self.grad_out = None  # last gradient w.r.t. the preactivation

    @property
    def weight_param(self) -> Param:
        return self.v if self.lcw else self.w

    def params(self):
        return [self.weight_param, self.b]

    def flat_weight(self) -> np.ndarray:
        """Realized weights, one row per output unit."""
        if self.lcw:
            return lift_rows(self.v.value, self.basis)
        return self.w.value

    def set_flat_weight(self, w: np.ndarray):
        """Store ``w``; in LCW mode its row means are discarded."""
        w = np.asarray(w, dtype=np.float64)
        if self.lcw:
            self.v.value = project_rows(w, self.basis)
        else:
            if w.shape != self.w.value.shape:
                raise ShapeError(f"weight shape {w.shape} != {self.w.value.shape}")
            self.w.value = w.copy()

    def scale_weight(self, k: float):
        self.weight_param.value = self.weight_param.value * k

    def _accumulate_weight_grad(self, grad_w_flat: np.ndarray):
        if self.lcw:
            # chain rule through the fixed map w = B v
            self.v.grad += grad_w_flat @ self.basis.basis
        else:
            self.w.grad += grad_w_flat


class Dense(_Weighted):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int, lcw: bool = False):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        basis = build_basis(self.in_features) if lcw else None
        self._setup_weight(self.out_features, self.in_features, lcw, basis)
        self._x = None
        self._w = None

    @property
    def fan_in(self):
        return self.in_features

    @property
    def fan_out(self):
        return self.out_features

    @property
    def weight(self) -> np.ndarray:
        return self.flat_weight()

    def forward(self, x, train=True):
        if x.ndim != 2 or x.shape[0] != self.in_features:
            raise ShapeError(
                f"dense layer expects ({self.in_features}, batch) input, got {x.shape}"
            )
        w = self.flat_weight()
        self._x, self._w = x, w
        self.out = w @ x + self.b.value[:, None]
        return self.out

    def backward(self, grad):
        if self._x is None:
            raise BackwardBeforeForward("dense backward called before forward")
        if grad.shape != (self.out_features, self._x.shape[1]):
            raise ShapeError(f"gradient shape {grad.shape} does not match output")
        self.grad_out = grad
        self._accumulate_weight_grad(grad @ self._x.T)
        self.b.grad += grad.sum(axis=1)
        return self._w.T @ grad

    def describe(self):
        return {"type": self.kind, "in": self.in_features, "out": self.out_features, "lcw": self.lcw}


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Rows are output positions (n, oh, ow); columns follow (c, kh, kw) order."""
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    img = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad)])
    col = np.empty((n, c, kh, kw, oh, ow))
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            col[:, :, i, j] = img[:, :, i:i_end:stride, j:j_end:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw)


def col2im(col: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col`; overlapping windows are summed."""
    n, c, h, w = x_shape
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            img[:, :, i:i_end:stride, j:j_end:stride] += col[:, :, i, j]
    return img[:, :, pad:pad + h, pad:pad + w]


class Conv2d(_Weighted):
    """2-D cross-correlation. In LCW mode each kernel's entries sum to zero."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, lcw=False):
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size, kernel_size)
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kh, self.kw = (int(k) for k in kernel_size)
        self.stride = int(stride)
        self.padding = int(padding)
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        fan = self.in_channels * self.kh * self.kw
        basis = kernel_basis(self.in_channels, self.kh, self.kw) if lcw else None
        self._setup_weight(self.out_channels, fan, lcw, basis)
        self._cols = None
        self._x_shape = None
        self._w = None

    @property
    def fan_in(self):
        return self.in_channels * self.kh * self.kw

    @property
    def fan_out(self):
        return self.out_channels * self.kh * self.kw

    @property
    def kernels(self) -> np.ndarray:
        return self.flat_weight().reshape(self.out_channels, self.in_channels, self.kh, self.kw)

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"conv expects (n, {self.in_channels}, h, w) input, got {x.shape}")
        n, _, h, w = x.shape
        oh = conv_output_size(h, self.kh, self.stride, self.padding)
        ow = conv_output_size(w, self.kw, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"{self.kh}x{self.kw} kernel does not fit {h}x{w} input with padding {self.padding}"
            )
        cols = im2col(x, self.kh, self.kw, self.stride, self.padding)
        wmat = self.flat_weight()
        self._cols, self._x_shape, self._w = cols, x.shape, wmat
        y = cols @ wmat.T + self.b.value
        self.out = y.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        return self.out

    def backward(self, grad):
        if self._cols is None:
            raise BackwardBeforeForward("conv backward called before forward")
        if self.out is not None and grad.shape != self.out.shape:
            raise ShapeError(f"gradient shape {grad.shape} != output shape {self.out.shape}")
        self.grad_out = grad
        g = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self._accumulate_weight_grad(g.T @ self._cols)
        self.b.grad += g.sum(axis=0)
        dcols = g @ self._w
        return col2im(dcols, self._x_shape, self.kh, self.kw, self.stride, self.padding)

    def describe(self):
        return {
            "type": self.kind, "in": self.in_channels, "out": self.out_channels,
            "kernel": [self.kh, self.kw], "stride": self.stride, "padding": self.padding,
            "lcw": self.lcw,
        }


def sigmoid(x):
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self):
        self._y = None

    def forward(self, x, train=True):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        if self._y is None:
            raise BackwardBeforeForward("sigmoid backward called before forward")
        return grad * self._y * (1.0 - self._y)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x, train=True):
        self._mask = x > 0  # f'(0) = 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        if self._mask is None:
            raise BackwardBeforeForward("relu backward called before forward")
        return grad * self._mask


class Identity(Layer):
    kind = "identity"

    def forward(self, x, train=True):
        return x

    def backward(self, grad):
        return grad


class Flatten(Layer):
    """(n, c, h, w) tensor -> (c*h*w, n) column matrix."""

    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1).T

    def backward(self, grad):
        if self._shape is None:
            raise BackwardBeforeForward("flatten backward called before forward")
        return grad.T.reshape(self._shape)


class BatchNorm(Layer):
    """Per-feature batch normalization.

    Accepts ``(features, batch)`` matrices or ``(n, c, h, w)`` tensors
    (normalized per channel). Running statistics are exponential moving
    averages of the batch mean and population variance.
    """

    kind = "batchnorm"

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.num_features = int(num_features)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Param("gamma", np.ones(num_features), decay=False)
        self.beta = Param("beta", np.zeros(num_features), decay=False)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.update_running = True
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def _to_2d(self, x):
        if x.ndim == 2:
            return x
        n, c, h, w = x.shape
        return x.transpose(1, 0, 2, 3).reshape(c, n * h * w)

    def _from_2d(self, y, shape):
        if len(shape) == 2:
            return y
        n, c, h, w = shape
        return y.reshape(c, n, h, w).transpose(1, 0, 2, 3)

    def forward(self, x, train=True):
        feat = x.shape[0] if x.ndim == 2 else x.shape[1]
        if feat != self.num_features:
            raise ShapeError(f"batchnorm has {self.num_features} features, input shape {x.shape}")
        x2 = self._to_2d(x)
        if train:
            if x2.shape[1] < 2:
                raise ValueError("batch norm in train mode needs at least 2 samples per feature")
            mu = x2.mean(axis=1)
            var = x2.var(axis=1)
            if self.update_running:
                self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
                self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x2 - mu[:, None]) * inv_std[:, None]
        self._cache = (xhat, inv_std, train, x.shape)
        y = self.gamma.value[:, None] * xhat + self.beta.value[:, None]
        return self._from_2d(y, x.shape)

    def backward(self, grad):
        if self._cache is None:
            raise BackwardBeforeForward("batchnorm backward called before forward")
        xhat, inv_std, train, shape = self._cache
        g = self._to_2d(grad)
        self.gamma.grad += (g * xhat).sum(axis=1)
        self.beta.grad += g.sum(axis=1)
        scale = (self.gamma.value * inv_std)[:, None]
        if not train:
            return self._from_2d(g * scale, shape)
        n = g.shape[1]
        dx = scale / n * (
            n * g - g.sum(axis=1, keepdims=True) - xhat * (g * xhat).sum(axis=1, keepdims=True)
        )
        return self._from_2d(dx, shape)

    def describe(self):
        return {"type": self.kind, "features": self.num_features, "eps": self.eps,
                "momentum": self.momentum}


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) and its gradient.

    ``logits`` is ``(classes, batch)``; ``labels`` holds class indices.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    k, n = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for batch of {n}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=0))
    log_p = shifted - log_norm
    cols = np.arange(n)
    loss = float(-log_p[labels, cols].mean())
    grad = np.exp(log_p)
    grad[labels, cols] -= 1.0
    return loss, grad / n


class Network:
    """Ordered layer stack trained with softmax cross-entropy."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        self._grad_logits = None
        self.logits = None

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def weighted_layers(self) -> list[_Weighted]:
        return [layer for layer in self.layers if isinstance(layer, _Weighted)]

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x, train=True, upto: int | None = None) -> np.ndarray:
        """Run layers ``[0, upto)`` (all by default); returns the last output."""
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers[:upto]:
            h = layer.forward(h, train=train)
        self.logits = h
        return h

    def loss(self, x, labels, train=True) -> float:
        logits = self.forward(x, train=train)
        loss, self._grad_logits = softmax_xent(logits, labels)
        return loss

    def backward(self) -> np.ndarray:
        if self._grad_logits is None:
            raise BackwardBeforeForward("call loss() before backward()")
        g = self._grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def set_train_mode_stats(self, update: bool):
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                layer.update_running = update

    def describe(self) -> list[dict]:
        return [layer.describe() for layer in self.layers]


def network_forward(net: Network, x, labels, train=True):
    """Forward pass; returns the preactivation of each weighted layer and the loss."""
    loss = net.loss(x, labels, train=train)
    return [layer.out for layer in net.weighted_layers()], loss


def network_backward(net: Network):
    """Backward pass; returns ``(param_grads, preactivation_grads)`` per weighted layer."""
    net.backward()
    layers = net.weighted_layers()
    return [[p.grad for p in layer.params()] for layer in layers], [l.grad_out for l in layers]


def make_activation(kind: str) -> Layer:
    try:
        return {"sigmoid": Sigmoid, "relu": ReLU, "identity": Identity}[kind]()
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def build_mlp(
    in_features: int,
    width: int,
    depth: int,
    classes: int,
    activation: str = "sigmoid",
    lcw: bool = False,
    batchnorm: bool = False,
    bn_position: str = "pre",
    bn_eps: float = 1e-5,
    bn_momentum: float = 0.1,
) -> Network:
    """MLP with ``depth`` dense layers (``depth - 1`` hidden plus the output).

    ``bn_position='pre'`` normalizes the preactivation before the nonlinearity;
    ``'post'`` normalizes the activation after it.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if bn_position not in ("pre", "post"):
        raise ValueError(f"bn_position must be 'pre' or 'post', got {bn_position!r}")
    layers: list[Layer] = []
    fan = in_features
    for _ in range(depth - 1):
        layers.append(Dense(fan, width, lcw=lcw))
        if batchnorm and bn_position == "pre":
            layers.append(BatchNorm(width, bn_eps, bn_momentum))
        layers.append(make_activation(activation))
        if batchnorm and bn_position == "post":
            layers.append(BatchNorm(width, bn_eps, bn_momentum))
        fan = width
    layers.append(Dense(fan, classes, lcw=lcw))
    return Network(layers)
