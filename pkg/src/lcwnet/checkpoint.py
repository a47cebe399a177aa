"""Binary model checkpoints.

Byte layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"LCWNETCK"
    8       4     uint32 format version (currently 1)
    12      8     uint64 header length H
    20      H     UTF-8 JSON header: {"layers": [...], "blobs": [...]}
    20+H    ...   parameter blobs, concatenated, each float64 '<f8' in C order

``layers`` holds one descriptor per layer (``Layer.describe()``); ``blobs``
lists ``{"layer": i, "name": str, "shape": [...]}`` in storage order. LCW
layers store the free coordinates ``v``; their bases are rebuilt on load.
Batch-norm running statistics are stored as blobs ``running_mean`` and
``running_var``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import (BatchNorm, Conv2d, Dense, Flatten, Identity, Layer, Network, ReLU,
                 Sigmoid)

MAGIC = b"LCWNETCK"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(IOError):
    pass


def _arrays(layer: Layer) -> dict[str, np.ndarray]:
    out = {p.name: p.value for p in layer.params()}
    if isinstance(layer, BatchNorm):
        out["running_mean"] = layer.running_mean
        out["running_var"] = layer.running_var
    return out


def save_checkpoint(net: Network, path) -> Path:
    path = Path(path)
    blobs, payload = [], []
    for i, layer in enumerate(net.layers):
        for name, arr in _arrays(layer).items():
            blobs.append({"layer": i, "name": name, "shape": list(arr.shape)})
            payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = json.dumps({"layers": net.describe(), "blobs": blobs}, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for chunk in payload:
            fh.write(chunk)
    return path


def layer_from_descriptor(d: dict) -> Layer:
    kind = d["type"]
    if kind == "dense":
        return Dense(d["in"], d["out"], lcw=d["lcw"])
    if kind == "conv2d":
        return Conv2d(d["in"], d["out"], tuple(d["kernel"]), d["stride"], d["padding"], lcw=d["lcw"])
    if kind == "batchnorm":
        return BatchNorm(d["features"], d["eps"], d["momentum"])
    simple = {"sigmoid": Sigmoid, "relu": ReLU, "identity": Identity, "flatten": Flatten}
    if kind in simple:
        return simple[kind]()
    raise CheckpointError(f"unknown layer type {kind!r} in checkpoint")


def load_checkpoint(path) -> Network:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    header = json.loads(data[start:start + hlen].decode())
    net = Network([layer_from_descriptor(d) for d in header["layers"]])
    offset = start + hlen
    for blob in header["blobs"]:
        shape = tuple(blob["shape"])
        n = int(np.prod(shape)) * 8
        if offset + n > len(data):
            raise CheckpointError(f"{path}: truncated at byte offset {offset}")
        arr = np.frombuffer(data, dtype="<f8", count=n // 8, offset=offset).reshape(shape)
        arr = arr.astype(np.float64)
        offset += n
        layer = net.layers[blob["layer"]]
        name = blob["name"]
        if name in ("running_mean", "running_var"):
            setattr(layer, name, arr)
            continue
        param = {p.name: p for p in layer.params()}[name]
        if param.value.shape != shape:
            raise CheckpointError(f"{path}: blob {name} of layer {blob['layer']} has shape {shape}")
        param.value = arr
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return net
