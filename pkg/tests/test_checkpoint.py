"""Checkpoint round-trips, corruption detection, and size arithmetic."""

import json
import struct

import numpy as np
import pytest

from odlr.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from odlr.errors import (
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from odlr.network import (
    BatchNormLayer,
    IdentityNet,
    NetworkConfig,
    build_network,
    train_step,
)


def trained_net(dtype="float64", seed=3):
    cfg = NetworkConfig(input_channels=1, encoder_channels=(4, 8, 16, 32),
                        seed=seed, dtype=dtype, task="denoise")
    net = build_network(cfg).train()
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = rng.standard_normal((4, 1, 64, 64)).astype(cfg.np_dtype)
        t = rng.standard_normal((4, 1, 64, 64)).astype(cfg.np_dtype)
        train_step(net, x, t)
    return net


class TestRoundTrip:
    def test_forward_bitwise_identical(self, tmp_path, rng):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        x = rng.standard_normal((2, 1, 64, 64))
        np.testing.assert_array_equal(net.forward(x, train=False),
                                      loaded.forward(x, train=False))

    def test_full_state_restored(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        for p, q in zip(net.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(p.value, q.value)
            np.testing.assert_array_equal(p.adam_m, q.adam_m)
            np.testing.assert_array_equal(p.adam_v, q.adam_v)
            assert p.step_count == q.step_count
        for a, b in zip(net.batchnorm_layers(), loaded.batchnorm_layers()):
            np.testing.assert_array_equal(a.state.mean, b.state.mean)
            np.testing.assert_array_equal(a.state.var, b.state.var)
        assert loaded.cfg.task == "denoise"
        assert loaded.mode == "eval"

    def test_float32_roundtrip_bit_exact(self, tmp_path, rng):
        net = trained_net(dtype="float32")
        path = tmp_path / "net32.odlr"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        for p, q in zip(net.parameters(), loaded.parameters()):
            assert q.value.dtype == np.float32
            np.testing.assert_array_equal(p.value, q.value)

    def test_identity_net_roundtrip(self, tmp_path, rng):
        save_checkpoint(IdentityNet(input_channels=1, input_size=64),
                        tmp_path / "id.odlr")
        loaded = load_checkpoint(tmp_path / "id.odlr")
        assert isinstance(loaded, IdentityNet)
        x = rng.standard_normal((1, 1, 64, 64))
        np.testing.assert_array_equal(loaded.forward(x), x)


class TestCorruptionDetection:
    def test_truncation_every_prefix_fails_cleanly(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        data = path.read_bytes()
        for cut in (len(data) // 3, len(data) - 5, 10):
            trunc = tmp_path / "trunc.odlr"
            trunc.write_bytes(data[:cut])
            with pytest.raises(CheckpointTruncatedError):
                load_checkpoint(trunc)

    def test_bad_magic(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointMagicError):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", VERSION + 9)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_shape_mismatch_from_config_tamper(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        data = path.read_bytes()
        cfg_len = struct.unpack("<I", data[8:12])[0]
        cfg = json.loads(data[12:12 + cfg_len].decode())
        cfg["encoder_channels"] = [8, 16, 32, 64]  # tensors no longer fit
        new_cfg = json.dumps(cfg, sort_keys=True).encode()
        patched = (data[:8] + struct.pack("<I", len(new_cfg)) + new_cfg
                   + data[12 + cfg_len:])
        bad = tmp_path / "patched.odlr"
        bad.write_bytes(patched)
        with pytest.raises(CheckpointShapeError):
            load_checkpoint(bad)


class TestSizeArithmetic:
    def test_payload_matches_count_oracle(self, tmp_path):
        net = trained_net()
        path = tmp_path / "net.odlr"
        save_checkpoint(net, path)
        size = path.stat().st_size

        cfg_json = json.dumps(
            __import__("odlr.checkpoint", fromlist=["network_config_dict"])
            .network_config_dict(net), sort_keys=True).encode()
        header = len(MAGIC) + 4 + 4 + len(cfg_json)

        # payload: 8 bytes per stored float (value + both moments + running
        # stats) and per step counter; metadata: 1-byte rank + 4 bytes/dim
        float_count = 0
        step_counts = 0
        bn_flags = 0
        meta = 0
        for layer in net.layers:
            for p in layer.parameters():
                float_count += 3 * p.value.size
                step_counts += 1
                meta += 3 * (1 + 4 * p.value.ndim)
            if isinstance(layer, BatchNormLayer):
                float_count += 2 * layer.state.mean.size
                meta += 2 * (1 + 4 * 1)
                bn_flags += 1
        expected = header + meta + 8 * float_count + 8 * step_counts + bn_flags
        assert size == expected
