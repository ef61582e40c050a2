"""Layer forward/backward contracts against hand values and FD oracles."""

import numpy as np
import pytest

from odlr import ops
from odlr.errors import ConfigurationError
from odlr.tensor import LayerConfig, Parameter

from oracles import conv2d_bruteforce, fd_gradient, max_rel_error


def conv_cfg(ci, co, k=4, stride=2, padding=1):
    return LayerConfig("conv", in_channels=ci, out_channels=co, kernel=(k, k),
                       stride=stride, padding=padding)


def deconv_cfg(ci, co, k=4, stride=2, padding=1):
    return LayerConfig("deconv", in_channels=ci, out_channels=co, kernel=(k, k),
                       stride=stride, padding=padding)


class TestConvForward:
    def test_zero_input_zero_output(self, rng):
        cfg = conv_cfg(3, 4)
        x = np.zeros((1, 3, 8, 8))
        w = rng.standard_normal((4, 3, 4, 4))
        y = ops.conv2d_forward(x, w, np.zeros(4), cfg)
        assert np.all(y == 0)

    def test_identity_kernel(self, rng):
        cfg = conv_cfg(1, 1, k=1, stride=1, padding=0)
        x = rng.standard_normal((2, 1, 5, 5))
        y = ops.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1), cfg)
        np.testing.assert_array_equal(y, x)

    def test_hand_convolution_2x2_blocks(self):
        # mean of each 2x2 block of 0..15
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        w = np.full((1, 1, 2, 2), 0.25)
        cfg = conv_cfg(1, 1, k=2, stride=2, padding=0)
        y = ops.conv2d_forward(x, w, np.zeros(1), cfg)
        np.testing.assert_allclose(y.reshape(-1), [2.5, 4.5, 10.5, 12.5])

    def test_matches_bruteforce(self, rng):
        cfg = conv_cfg(3, 5)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((5, 3, 4, 4))
        b = rng.standard_normal(5)
        got = ops.conv2d_forward(x, w, b, cfg)
        want = conv2d_bruteforce(x, w, b, 2, 1)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_output_shape_formula(self, rng):
        cfg = conv_cfg(2, 3, k=3, stride=2, padding=0)
        y = ops.conv2d_forward(rng.standard_normal((1, 2, 9, 7)),
                               rng.standard_normal((3, 2, 3, 3)), np.zeros(3), cfg)
        assert y.shape == (1, 3, 4, 3)

    def test_channel_mismatch_names_dimension(self, rng):
        cfg = conv_cfg(3, 4)
        with pytest.raises(ConfigurationError, match="channels"):
            ops.conv2d_forward(rng.standard_normal((1, 2, 8, 8)),
                               rng.standard_normal((4, 3, 4, 4)), np.zeros(4), cfg)


class TestConvBackward:
    def test_zero_upstream_zero_grads(self, rng):
        cfg = conv_cfg(3, 4)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 4, 4))
        gx, gw, gb = ops.conv2d_backward(x, np.zeros((2, 4, 4, 4)), w, cfg)
        assert np.all(gx == 0) and np.all(gw == 0) and np.all(gb == 0)

    def test_linearity_in_upstream(self, rng):
        cfg = conv_cfg(2, 3)
        x = rng.standard_normal((1, 2, 8, 8))
        w = rng.standard_normal((3, 2, 4, 4))
        up = rng.standard_normal((1, 3, 4, 4))
        g1 = ops.conv2d_backward(x, up, w, cfg)
        g2 = ops.conv2d_backward(x, 2.0 * up, w, cfg)
        for a, b in zip(g1, g2):
            np.testing.assert_allclose(2.0 * a, b, rtol=1e-13)

    def test_finite_differences(self, rng):
        cfg = conv_cfg(3, 4)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 4, 4))
        b = rng.standard_normal(4)
        up = rng.standard_normal((2, 4, 4, 4))
        gx, gw, gb = ops.conv2d_backward(x, up, w, cfg)

        def objective():
            return float(np.vdot(up, ops.conv2d_forward(x, w, b, cfg)))

        sample = rng.choice(x.size, 60, replace=False)
        fd = fd_gradient(objective, x, coords=sample)
        assert max_rel_error(gx.reshape(-1)[sample], fd.reshape(-1)[sample]) < 1e-4
        sample_w = rng.choice(w.size, 60, replace=False)
        fd_w = fd_gradient(objective, w, coords=sample_w)
        assert max_rel_error(gw.reshape(-1)[sample_w],
                             fd_w.reshape(-1)[sample_w]) < 1e-4
        fd_b = fd_gradient(objective, b)
        assert max_rel_error(gb, fd_b) < 1e-4

    def test_accumulates_into_parameter(self, rng):
        cfg = conv_cfg(1, 2)
        x = rng.standard_normal((1, 1, 4, 4))
        w = Parameter(rng.standard_normal((2, 1, 4, 4)), "w")
        b = Parameter(np.zeros(2), "b")
        up = rng.standard_normal((1, 2, 2, 2))
        _, gw, gb = ops.conv2d_backward(x, up, w, cfg, bias=b)
        np.testing.assert_array_equal(w.grad, gw)
        np.testing.assert_array_equal(b.grad, gb)
        ops.conv2d_backward(x, up, w, cfg, bias=b)
        np.testing.assert_allclose(w.grad, 2 * gw)

    def test_upstream_shape_checked(self, rng):
        cfg = conv_cfg(1, 2)
        with pytest.raises(ConfigurationError, match="upstream"):
            ops.conv2d_backward(rng.standard_normal((1, 1, 8, 8)),
                                rng.standard_normal((1, 2, 3, 3)),
                                rng.standard_normal((2, 1, 4, 4)), cfg)


class TestDeconv:
    def test_zeros_in_bias_broadcast_out(self, rng):
        cfg = deconv_cfg(4, 2)
        w = rng.standard_normal((4, 2, 4, 4))
        b = np.array([1.5, -0.5])
        y = ops.deconv2d_forward(np.zeros((1, 4, 4, 4)), w, b, cfg)
        assert y.shape == (1, 2, 8, 8)
        np.testing.assert_array_equal(y[0, 0], np.full((8, 8), 1.5))
        np.testing.assert_array_equal(y[0, 1], np.full((8, 8), -0.5))

    def test_stride2_chain_doubles_spatial(self, rng):
        x = rng.standard_normal((1, 512, 4, 4)).astype(np.float32)
        chans = (512, 256, 128, 64, 3)
        sizes = []
        for ci, co in zip(chans[:-1], chans[1:]):
            cfg = deconv_cfg(ci, co)
            w = (0.01 * rng.standard_normal((ci, co, 4, 4))).astype(np.float32)
            x = ops.deconv2d_forward(x, w, np.zeros(co, dtype=np.float32), cfg)
            sizes.append(x.shape[2])
        assert sizes == [8, 16, 32, 64]

    def test_adjoint_identity(self, rng):
        for trial in range(5):
            ci, co = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            ccfg = conv_cfg(ci, co)
            dcfg = deconv_cfg(co, ci)
            x = rng.standard_normal((2, ci, 8, 8))
            w = rng.standard_normal((co, ci, 4, 4))
            y = rng.standard_normal((2, co, 4, 4))
            lhs = np.vdot(ops.conv2d_forward(x, w, np.zeros(co), ccfg), y)
            rhs = np.vdot(x, ops.deconv2d_forward(y, w, np.zeros(ci), dcfg))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-12) < 1e-10

    def test_finite_differences(self, rng):
        cfg = deconv_cfg(3, 2)
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((3, 2, 4, 4))
        b = rng.standard_normal(2)
        up = rng.standard_normal((2, 2, 8, 8))
        gx, gw, gb = ops.deconv2d_backward(x, up, w, cfg)

        def objective():
            return float(np.vdot(up, ops.deconv2d_forward(x, w, b, cfg)))

        fd_x = fd_gradient(objective, x)
        assert max_rel_error(gx, fd_x) < 1e-4
        fd_w = fd_gradient(objective, w)
        assert max_rel_error(gw, fd_w) < 1e-4
        fd_b = fd_gradient(objective, b)
        assert max_rel_error(gb, fd_b) < 1e-4


class TestBatchNorm:
    def cfg(self, c):
        return LayerConfig("batchnorm", in_channels=c, out_channels=c)

    def test_train_normalizes_per_channel(self, rng):
        x = rng.standard_normal((8, 3, 6, 6)) * 3.0 + 1.0
        state = ops.BatchNormState.identity(3)
        y, _ = ops.batchnorm_forward(x, np.ones(3), np.zeros(3), self.cfg(3),
                                     state, train=True)
        mean = y.mean(axis=(0, 2, 3))
        var = y.var(axis=(0, 2, 3))
        np.testing.assert_allclose(mean, 0.0, atol=1e-6)
        # epsilon shrinks the variance slightly below one
        np.testing.assert_allclose(var, 1.0, atol=1e-4)

    def test_constant_channel_collapses_to_beta(self):
        x = np.full((4, 2, 3, 3), 7.0)
        beta = np.array([0.3, -0.8])
        state = ops.BatchNormState.identity(2)
        y, _ = ops.batchnorm_forward(x, np.ones(2), beta, self.cfg(2), state,
                                     train=True)
        np.testing.assert_allclose(y[:, 0], 0.3, atol=1e-12)
        np.testing.assert_allclose(y[:, 1], -0.8, atol=1e-12)

    def test_eval_before_init_errors(self, rng):
        state = ops.BatchNormState(np.zeros(2), np.ones(2), initialized=False)
        with pytest.raises(ConfigurationError, match="eval"):
            ops.batchnorm_forward(rng.standard_normal((2, 2, 3, 3)), np.ones(2),
                                  np.zeros(2), self.cfg(2), state, train=False)

    def test_eval_with_explicit_identity_stats(self, rng):
        x = rng.standard_normal((2, 2, 3, 3))
        state = ops.BatchNormState.identity(2)
        eps = self.cfg(2).epsilon
        y, _ = ops.batchnorm_forward(x, np.ones(2), np.zeros(2), self.cfg(2),
                                     state, train=False)
        np.testing.assert_allclose(y, x / np.sqrt(1 + eps), rtol=1e-12)

    def test_running_stats_ema(self, rng):
        x = rng.standard_normal((16, 1, 8, 8)) * 2.0 + 5.0
        state = ops.BatchNormState.identity(1)
        cfg = self.cfg(1)
        ops.batchnorm_forward(x, np.ones(1), np.zeros(1), cfg, state, train=True)
        want_mean = 0.9 * 0.0 + 0.1 * x.mean()
        want_var = 0.9 * 1.0 + 0.1 * x.var()
        np.testing.assert_allclose(state.mean, want_mean, rtol=1e-12)
        np.testing.assert_allclose(state.var, want_var, rtol=1e-12)

    def test_train_needs_two_samples(self, rng):
        with pytest.raises(ConfigurationError, match=">= 2"):
            ops.batchnorm_forward(rng.standard_normal((1, 2, 1, 1)), np.ones(2),
                                  np.zeros(2), self.cfg(2), ops.BatchNormState.identity(2),
                                  train=True)

    def test_finite_differences(self, rng):
        x = rng.standard_normal((4, 3, 5, 5))
        g = 1.0 + 0.2 * rng.standard_normal(3)
        b = 0.1 * rng.standard_normal(3)
        up = rng.standard_normal(x.shape)
        cfg = self.cfg(3)

        def forward():
            state = ops.BatchNormState.identity(3)
            y, _ = ops.batchnorm_forward(x, g, b, cfg, state, train=True)
            return y

        state = ops.BatchNormState.identity(3)
        _, cache = ops.batchnorm_forward(x, g, b, cfg, state, train=True)
        gx, gg, gb = ops.batchnorm_backward(cache, up, g, b)

        def objective():
            return float(np.vdot(up, forward()))

        sample = rng.choice(x.size, 80, replace=False)
        fd_x = fd_gradient(objective, x, coords=sample)
        assert max_rel_error(gx.reshape(-1)[sample], fd_x.reshape(-1)[sample]) < 1e-4
        assert max_rel_error(gg, fd_gradient(objective, g)) < 1e-4
        assert max_rel_error(gb, fd_gradient(objective, b)) < 1e-4


class TestActivations:
    def test_definitions(self):
        assert ops.activation_forward(np.array([[[[0.0]]]]), "tanh")[0, 0, 0, 0] == 0.0
        assert ops.activation_forward(np.array([[[[-3.0]]]]), "relu")[0, 0, 0, 0] == 0.0
        val = ops.activation_forward(np.array([[[[-1.0]]]]), "leaky_relu", 0.2)
        np.testing.assert_allclose(val[0, 0, 0, 0], -0.2)

    def test_shape_preserved(self, rng):
        x = rng.standard_normal((2, 3, 4, 5))
        for kind in ("relu", "leaky_relu", "tanh"):
            assert ops.activation_forward(x, kind).shape == x.shape

    @pytest.mark.parametrize("kind", ["relu", "leaky_relu", "tanh"])
    def test_finite_differences_away_from_kink(self, rng, kind):
        x = rng.standard_normal((3, 2, 4, 4))
        # resample coordinates too close to the relu kink
        mask = np.abs(x) < 1e-3
        while mask.any():
            x[mask] = rng.standard_normal(int(mask.sum()))
            mask = np.abs(x) < 1e-3
        up = rng.standard_normal(x.shape)
        gx = ops.activation_backward(x, up, kind, 0.2)

        def objective():
            return float(np.vdot(up, ops.activation_forward(x, kind, 0.2)))

        fd = fd_gradient(objective, x)
        assert max_rel_error(gx, fd) < 1e-4

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            ops.activation_forward(np.zeros((1, 1, 1, 1)), "swish")


class TestChannelwiseFC:
    def test_identity_weights(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        w = np.stack([np.eye(16)] * 3)
        y = ops.channelwise_fc_forward(x, w, np.zeros((3, 16)))
        np.testing.assert_allclose(y, x, atol=1e-12)

    def test_no_cross_channel_mixing(self, rng):
        x = rng.standard_normal((1, 4, 4, 4))
        w = rng.standard_normal((4, 16, 16))
        b = rng.standard_normal((4, 16))
        base = ops.channelwise_fc_forward(x, w, b)
        x2 = x.copy()
        x2[0, 2] += rng.standard_normal((4, 4))
        moved = ops.channelwise_fc_forward(x2, w, b)
        diff = np.abs(moved - base).sum(axis=(0, 2, 3))
        assert diff[2] > 0
        assert diff[0] == diff[1] == diff[3] == 0

    def test_zeroed_channel_weights_zero_that_output(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((3, 16, 16))
        w[1] = 0.0
        y = ops.channelwise_fc_forward(x, w, np.zeros((3, 16)))
        assert np.all(y[:, 1] == 0)
        assert np.any(y[:, 0] != 0)

    def test_weight_shape_error(self, rng):
        with pytest.raises(ConfigurationError, match="inconsistent"):
            ops.channelwise_fc_forward(rng.standard_normal((1, 3, 4, 4)),
                                       rng.standard_normal((3, 8, 8)),
                                       np.zeros((3, 8)))

    def test_finite_differences(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((3, 16, 16)) * 0.3
        b = rng.standard_normal((3, 16)) * 0.1
        up = rng.standard_normal(x.shape)
        gx, gw, gb = ops.channelwise_fc_backward(x, up, w)

        def objective():
            return float(np.vdot(up, ops.channelwise_fc_forward(x, w, b)))

        sample = rng.choice(w.size, 80, replace=False)
        fd_w = fd_gradient(objective, w, coords=sample)
        assert max_rel_error(gw.reshape(-1)[sample], fd_w.reshape(-1)[sample]) < 1e-4
        assert max_rel_error(gx, fd_gradient(objective, x)) < 1e-4
        assert max_rel_error(gb, fd_gradient(objective, b)) < 1e-4


class TestMseLoss:
    def test_identical_zero(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        loss, grad = ops.mse_loss(x, x.copy())
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_constant_difference(self):
        a = np.zeros((1, 1, 10, 10))
        b = np.full((1, 1, 10, 10), 0.1)
        loss, _ = ops.mse_loss(b, a)
        np.testing.assert_allclose(loss, 0.01, rtol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        a = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal((2, 2, 3, 3))
        _, grad = ops.mse_loss(a, b)

        def objective():
            return ops.mse_loss(a, b)[0]

        fd = fd_gradient(objective, a)
        assert max_rel_error(grad, fd, floor=1e-6) < 1e-6

    def test_symmetry(self, rng):
        a = rng.standard_normal((1, 1, 4, 4))
        b = rng.standard_normal((1, 1, 4, 4))
        la, ga = ops.mse_loss(a, b)
        lb, gb = ops.mse_loss(b, a)
        assert la == lb
        np.testing.assert_allclose(ga, -gb, rtol=1e-14)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ConfigurationError):
            ops.mse_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)))
