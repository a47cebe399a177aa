"""SGD with momentum, the step-decay learning-rate schedule, and the training loop."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import ModelSpec, TrainConfig
from .data import (Dataset, augment_batch, load_cifar10, make_synthetic, normalize, split,
                   to_network_input)
from .init import InitSpec, initialize
from .linalg import Rng
from .nn import (BatchNorm, Conv2d, Dense, Flatten, Layer, Network, Param, build_mlp,
                 make_activation)

log = logging.getLogger(__name__)

# independent random streams derived from the config seed
STREAM_DATA, STREAM_INIT, STREAM_SHUFFLE, STREAM_AUGMENT = 0, 1, 2, 3


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.loss = epoch, batch, loss


class SGDState:
    """Momentum buffers, one per parameter."""

    def __init__(self, params: list[Param]):
        self.buffers = [np.zeros_like(p.value) for p in params]


def sgd_step(params: list[Param], state: SGDState, lr: float, momentum: float, weight_decay: float):
    """buf <- momentum * buf + (grad + wd * param);  param <- param - lr * buf.

    Weight decay applies only to parameters flagged ``decay`` (weights and
    LCW coordinates, not biases or batch-norm scale/shift).
    """
    for p, buf in zip(params, state.buffers):
        g = p.grad + weight_decay * p.value if p.decay and weight_decay else p.grad
        buf *= momentum
        buf += g
        p.value = p.value - lr * buf


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    steps = epoch // cfg.lr_decay_every
    return max(cfg.lr * cfg.lr_decay**steps, cfg.lr_floor)


def build_model(spec: ModelSpec, feature_shape: tuple[int, ...], classes: int) -> Network:
    if spec.layers is None:
        if len(feature_shape) == 1:
            return build_mlp(feature_shape[0], spec.width, spec.depth, classes, spec.activation,
                             spec.lcw, spec.batchnorm, spec.bn_position, spec.bn_eps,
                             spec.bn_momentum)
        flat = int(np.prod(feature_shape))
        net = build_mlp(flat, spec.width, spec.depth, classes, spec.activation, spec.lcw,
                        spec.batchnorm, spec.bn_position, spec.bn_eps, spec.bn_momentum)
        return Network([Flatten()] + net.layers)

    layers: list[Layer] = []
    shape = tuple(feature_shape)  # per-sample shape flowing through the stack
    for i, d in enumerate(spec.layers):
        kind = d.get("type")
        lcw = d.get("lcw", spec.lcw)
        if kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"layer {i}: dense needs flat input, add a flatten layer")
            layers.append(Dense(shape[0], d["out"], lcw=lcw))
            shape = (d["out"],)
        elif kind == "conv2d":
            c, h, w = shape
            conv = Conv2d(c, d["out"], d.get("kernel", 3), d.get("stride", 1),
                          d.get("padding", 0), lcw=lcw)
            oh = (h + 2 * conv.padding - conv.kh) // conv.stride + 1
            ow = (w + 2 * conv.padding - conv.kw) // conv.stride + 1
            layers.append(conv)
            shape = (d["out"], oh, ow)
        elif kind == "batchnorm":
            layers.append(BatchNorm(shape[0], d.get("eps", spec.bn_eps),
                                    d.get("momentum", spec.bn_momentum)))
        elif kind == "flatten":
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
        elif kind in ("sigmoid", "relu", "identity"):
            layers.append(make_activation(kind))
        else:
            raise ValueError(f"layer {i}: unknown type {kind!r}")
    if shape != (classes,):
        raise ValueError(f"model output shape {shape} does not match {classes} classes")
    return Network(layers)


def load_data(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    spec = cfg.data
    if spec.kind == "synthetic":
        full = make_synthetic(spec.synthetic, Rng(cfg.seed, STREAM_DATA))
        train, test = split(full, spec.test_fraction, Rng(cfg.seed, STREAM_DATA))
        train, test = normalize(train, test)
        return train, test
    return load_cifar10(spec.root, variant=spec.kind)


def prepare_network(cfg: TrainConfig, train_data: Dataset, shuffle_rng: Rng) -> tuple[Network, np.ndarray]:
    """Build and initialize the model; returns it with the epoch-0 sample order.

    Minibatch initialization uses the first training batch of that order
    (at least 32 samples).
    """
    net = build_model(cfg.model, train_data.feature_shape, train_data.classes)
    n = len(train_data)
    order = shuffle_rng.permutation(n)
    init_idx = order[:max(min(cfg.batch_size, n), min(32, n))]
    init_batch = to_network_input(train_data.inputs[init_idx])
    initialize(net, InitSpec(cfg.init, cfg.seed), init_batch, Rng(cfg.seed, STREAM_INIT))
    return net, order


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float
    lr: float
    wall_time: float


@dataclass
class MetricsLog:
    rows: list[EpochRecord] = field(default_factory=list)

    COLUMNS = ("epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy", "lr")

    def append(self, row: EpochRecord):
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.rows.append(row)

    def to_csv(self, include_wall_time: bool = False) -> str:
        """CSV text with ``repr`` floats. Wall time is excluded by default so
        that identical runs give byte-identical files."""
        cols = self.COLUMNS + (("wall_time",) if include_wall_time else ())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.rows:
            writer.writerow([repr(getattr(r, c)) for c in cols])
        return buf.getvalue()


def evaluate(net: Network, data: Dataset, batch_size: int = 500) -> tuple[float, float]:
    """Mean loss and accuracy with batch norm in eval mode."""
    total_loss, correct = 0.0, 0
    for start in range(0, len(data), batch_size):
        part = data.subset(slice(start, start + batch_size))
        loss = net.loss(to_network_input(part.inputs), part.labels, train=False)
        total_loss += loss * len(part)
        correct += int((net.logits.argmax(axis=0) == part.labels).sum())
    return total_loss / len(data), correct / len(data)


@dataclass
class TrainResult:
    net: Network
    metrics: MetricsLog
    checkpoint: Path | None = None


def train(cfg: TrainConfig, data: tuple[Dataset, Dataset] | None = None) -> TrainResult:
    """Run the full loop; writes ``metrics.csv``, ``timing.csv`` and
    ``model.ckpt`` into ``cfg.output_dir`` when it is set."""
    cfg.validate()
    train_data, test_data = data if data is not None else load_data(cfg)
    shuffle_rng = Rng(cfg.seed, STREAM_SHUFFLE)
    net, order = prepare_network(cfg, train_data, shuffle_rng)
    augment_rng = Rng(cfg.seed, STREAM_AUGMENT)
    n = len(train_data)
    bs = min(cfg.batch_size, n)

    params = net.params()
    state = SGDState(params)
    needs_pairs = any(isinstance(l, BatchNorm) for l in net.layers)
    metrics = MetricsLog()
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        if epoch > 0:
            order = shuffle_rng.permutation(n)
        lr = lr_schedule(epoch, cfg)
        loss_sum, correct, seen = 0.0, 0, 0
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            if needs_pairs and idx.size < 2:
                continue
            x = train_data.inputs[idx]
            if cfg.augment and x.ndim == 4:
                x = augment_batch(x, augment_rng)
            net.zero_grad()
            loss = net.loss(to_network_input(x), train_data.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            net.backward()
            sgd_step(params, state, lr, cfg.momentum, cfg.weight_decay)
            loss_sum += loss * idx.size
            correct += int((net.logits.argmax(axis=0) == train_data.labels[idx]).sum())
            seen += idx.size
        test_loss, test_acc = evaluate(net, test_data)
        row = EpochRecord(epoch, loss_sum / seen, correct / seen, test_loss, test_acc, lr,
                          time.perf_counter() - t0)
        metrics.append(row)
        log.info("epoch %d lr %.4g train loss %.4f acc %.4f test loss %.4f acc %.4f",
                 epoch, lr, row.train_loss, row.train_accuracy, test_loss, test_acc)

    ckpt = None
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics.to_csv())
        with open(out / "timing.csv", "w") as fh:
            fh.write("epoch,wall_time\n")
            for r in metrics.rows:
                fh.write(f"{r.epoch},{r.wall_time!r}\n")
        ckpt = save_checkpoint(net, out / "model.ckpt")
    return TrainResult(net, metrics, ckpt)
