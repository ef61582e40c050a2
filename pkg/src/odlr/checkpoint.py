"""Bit-exact binary persistence for network state.

Layout (all integers little-endian):

    magic   4 bytes  b"ODLR"
    version u32      currently 1
    cfg_len u32      length of the UTF-8 JSON config block
    config  bytes    JSON: network kind, geometry, seed, dtype, task
    body             encoder-decoder only, layers in order:
                       per parameter: value, adam_m, adam_v tensors,
                                      then u64 step_count
                       per batchnorm: running mean, running var tensors,
                                      then u8 initialized flag
    tensor           u8 rank, u32 dims[rank], float64 payload

Values are always stored as 64-bit floats; float32 networks round-trip
bit-exactly because the widening cast is lossless. Loading rebuilds the
network from the config block, so every stored shape is checked against
the architecture before any data is accepted.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import (
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .network import (
    BatchNormLayer,
    EncoderDecoder,
    IdentityNet,
    NetworkConfig,
    build_network,
)

MAGIC = b"ODLR"
VERSION = 1


def _write_tensor(out: io.BytesIO, arr: np.ndarray) -> None:
    out.write(struct.pack("<B", arr.ndim))
    out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def tensor(self, expected_shape: tuple[int, ...], what: str) -> np.ndarray:
        rank = self.u8()
        dims = struct.unpack(f"<{rank}I", self.take(4 * rank))
        if dims != tuple(expected_shape):
            raise CheckpointShapeError(
                f"{what}: stored shape {dims} != expected {tuple(expected_shape)}"
            )
        count = int(np.prod(dims)) if dims else 1
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").reshape(dims).copy()

    def done(self) -> bool:
        return self.pos == len(self.data)


def network_config_dict(net) -> dict:
    if isinstance(net, IdentityNet):
        return {"kind": "identity", "input_channels": net.input_channels,
                "input_size": net.input_size}
    d = asdict(net.cfg)
    d["encoder_channels"] = list(net.cfg.encoder_channels)
    d["kind"] = net.kind
    return d


def save_checkpoint(net, path) -> None:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    cfg_json = json.dumps(network_config_dict(net), sort_keys=True).encode("utf-8")
    out.write(struct.pack("<I", len(cfg_json)))
    out.write(cfg_json)
    if isinstance(net, EncoderDecoder):
        for layer in net.layers:
            for p in layer.parameters():
                _write_tensor(out, p.value)
                _write_tensor(out, p.adam_m)
                _write_tensor(out, p.adam_v)
                out.write(struct.pack("<Q", p.step_count))
            if isinstance(layer, BatchNormLayer):
                _write_tensor(out, layer.state.mean)
                _write_tensor(out, layer.state.var)
                out.write(struct.pack("<B", int(layer.state.initialized)))
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def load_checkpoint(path):
    """Rebuild the exact saved network; returns it in eval mode."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != MAGIC:
        raise CheckpointMagicError(f"{path}: not a checkpoint file (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint version {version} (expected {VERSION})"
        )
    cfg_json = reader.take(reader.u32())
    cfg_dict = json.loads(cfg_json.decode("utf-8"))
    kind = cfg_dict.pop("kind", "encoder_decoder")
    if kind == "identity":
        return IdentityNet(**cfg_dict)

    cfg = NetworkConfig(**{k: v for k, v in cfg_dict.items()})
    net = build_network(cfg)
    dtype = cfg.np_dtype
    for layer in net.layers:
        for p in layer.parameters():
            p.value = reader.tensor(p.value.shape, p.name).astype(dtype)
            p.adam_m = reader.tensor(p.adam_m.shape, f"{p.name}.adam_m").astype(dtype)
            p.adam_v = reader.tensor(p.adam_v.shape, f"{p.name}.adam_v").astype(dtype)
            p.step_count = reader.u64()
            p.grad = np.zeros_like(p.value)
        if isinstance(layer, BatchNormLayer):
            layer.state.mean = reader.tensor(layer.state.mean.shape,
                                             f"{layer.name}.running_mean").astype(dtype)
            layer.state.var = reader.tensor(layer.state.var.shape,
                                            f"{layer.name}.running_var").astype(dtype)
            layer.state.initialized = bool(reader.u8())
    if not reader.done():
        raise CheckpointShapeError(
            f"{path}: {len(reader.data) - reader.pos} unexpected trailing bytes"
        )
    return net.eval()
