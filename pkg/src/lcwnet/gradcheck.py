"""Central finite-difference checks of every layer's backward pass."""
from __future__ import annotations

import numpy as np

from .diagnostics import Verdict
from .init import glorot_init
from .linalg import Rng
from .nn import (BatchNorm, Conv2d, Dense, Flatten, Layer, Network, ReLU, Sigmoid,
                 softmax_xent)

STEP = 1e-5
TOLERANCE = 1e-5
ZERO_FLOOR = 1e-7  # both norms below this: the gradient is identically zero (e.g. bias before BN)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / (||a|| + ||b||), or 0 when both gradients vanish."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < ZERO_FLOOR and nb < ZERO_FLOOR:
        return 0.0
    return float(np.linalg.norm(a - b) / (na + nb))


def numeric_grad(f, x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_layer(layer: Layer, x: np.ndarray, rng: Rng, h: float = STEP) -> dict[str, float]:
    """Compare backward() against central differences of ``sum(R * forward(x))``.

    Returns the relative error for the input and for every parameter.
    """
    x = x.copy()
    y = layer.forward(x, train=True)
    r = rng.normal(0.0, 1.0, y.shape)

    def f():
        return float(np.sum(r * layer.forward(x, train=True)))

    for p in layer.params():
        p.grad[...] = 0.0
    layer.forward(x, train=True)
    gx = layer.backward(r)
    errors = {"input": relative_error(gx, numeric_grad(f, x, h))}
    for p in layer.params():
        analytic = p.grad.copy()
        errors[p.name] = relative_error(analytic, numeric_grad(f, p.value, h))
    return errors


def check_network(net: Network, x: np.ndarray, labels, h: float = STEP) -> dict[str, float]:
    def f():
        return net.loss(x, labels, train=True)

    net.zero_grad()
    net.loss(x, labels)
    gx = net.backward()
    errors = {"input": relative_error(gx, numeric_grad(f, x, h))}
    for i, layer in enumerate(net.layers):
        for p in layer.params():
            errors[f"{i}.{layer.kind}.{p.name}"] = relative_error(p.grad.copy(), numeric_grad(f, p.value, h))
    return errors


def check_softmax_xent(logits: np.ndarray, labels, h: float = STEP) -> float:
    logits = logits.copy()
    _, grad = softmax_xent(logits, labels)
    return relative_error(grad, numeric_grad(lambda: softmax_xent(logits, labels)[0], logits, h))


def _away_from_zero(x: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    # keeps ReLU test points off the kink
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * (margin + np.abs(x)), x)


def _mlp(widths, lcw: bool, batchnorm: bool) -> Network:
    layers: list[Layer] = []
    for a, b in zip(widths[:-2], widths[1:-1]):
        layers.append(Dense(a, b, lcw=lcw))
        if batchnorm:
            layers.append(BatchNorm(b))
        layers.append(Sigmoid())
    layers.append(Dense(widths[-2], widths[-1], lcw=lcw))
    return Network(layers)


def _randomize(layer, rng: Rng):
    if hasattr(layer, "weight_param"):
        glorot_init(layer, rng)
        layer.b.value = rng.normal(0.0, 0.5, layer.b.value.shape)
    if isinstance(layer, BatchNorm):
        layer.gamma.value = rng.uniform(0.5, 1.5, layer.gamma.value.shape)
        layer.beta.value = rng.normal(0.0, 0.5, layer.beta.value.shape)


def cases(seed: int):
    """(name, callable returning {part: relative error}) for one seed."""
    def dense(lcw):
        def run():
            rng = Rng(seed, 1)
            layer = Dense(4, 3, lcw=lcw)
            _randomize(layer, rng)
            return check_layer(layer, rng.normal(0.0, 1.0, (4, 5)), rng)
        return run

    def conv(lcw, stride, padding):
        def run():
            rng = Rng(seed, 2)
            layer = Conv2d(3, 4, 3, stride=stride, padding=padding, lcw=lcw)
            _randomize(layer, rng)
            return check_layer(layer, rng.normal(0.0, 1.0, (2, 3, 5, 5)), rng)
        return run

    def activation(cls):
        def run():
            rng = Rng(seed, 3)
            return check_layer(cls(), _away_from_zero(rng.normal(0.0, 2.0, (4, 6))), rng)
        return run

    def batchnorm(shape, eval_mode=False):
        def run():
            rng = Rng(seed, 4)
            layer = BatchNorm(shape[0] if len(shape) == 2 else shape[1])
            _randomize(layer, rng)
            x = rng.normal(1.0, 2.0, shape)
            if eval_mode:
                layer.running_mean = rng.normal(0.0, 1.0, layer.running_mean.shape)
                layer.running_var = rng.uniform(0.5, 2.0, layer.running_var.shape)
                return _check_eval_bn(layer, x, rng)
            return check_layer(layer, x, rng)
        return run

    def flatten():
        rng = Rng(seed, 5)
        return check_layer(Flatten(), rng.normal(0.0, 1.0, (2, 3, 2, 2)), rng)

    def xent():
        rng = Rng(seed, 6)
        return {"logits": check_softmax_xent(rng.normal(0.0, 2.0, (5, 3)), rng.integers(5, 3))}

    def mlp(lcw, batchnorm):
        def run():
            rng = Rng(seed, 7)
            net = _mlp([6, 5, 5, 4], lcw, batchnorm)
            for layer in net.layers:
                _randomize(layer, rng)
            x = rng.normal(0.0, 1.0, (6, 8))
            return check_network(net, x, rng.integers(4, 8))
        return run

    return [
        ("dense", dense(False)),
        ("dense_lcw", dense(True)),
        ("conv2d", conv(False, 1, 0)),
        ("conv2d_lcw", conv(True, 1, 0)),
        ("conv2d_stride2_pad1", conv(False, 2, 1)),
        ("conv2d_lcw_pad1", conv(True, 1, 1)),
        ("sigmoid", activation(Sigmoid)),
        ("relu", activation(ReLU)),
        ("batchnorm", batchnorm((4, 8))),
        ("batchnorm_eval", batchnorm((4, 8), eval_mode=True)),
        ("batchnorm_conv", batchnorm((3, 2, 2, 2))),
        ("flatten", flatten),
        ("softmax_xent", xent),
        ("mlp_sigmoid", mlp(False, False)),
        ("mlp_sigmoid_lcw", mlp(True, False)),
        ("mlp_sigmoid_bn_lcw", mlp(True, True)),
    ]


def _check_eval_bn(layer: BatchNorm, x, rng: Rng):
    x = x.copy()
    y = layer.forward(x, train=False)
    r = rng.normal(0.0, 1.0, y.shape)
    f = lambda: float(np.sum(r * layer.forward(x, train=False)))  # noqa: E731
    for p in layer.params():
        p.grad[...] = 0.0
    layer.forward(x, train=False)
    errors = {"input": relative_error(layer.backward(r), numeric_grad(f, x))}
    for p in layer.params():
        errors[p.name] = relative_error(p.grad.copy(), numeric_grad(f, p.value))
    return errors


def gradcheck_suite(seeds=range(10), tol: float = TOLERANCE) -> list[Verdict]:
    """One verdict per case, taking the worst relative error over all seeds."""
    worst: dict[str, float] = {}
    for seed in seeds:
        for name, run in cases(seed):
            err = max(run().values())
            worst[name] = max(worst.get(name, 0.0), err)
    return [Verdict(f"gradcheck_{name}", 0.0, err, tol, err < tol) for name, err in worst.items()]
