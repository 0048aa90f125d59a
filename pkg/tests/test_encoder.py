"""Dilated causal convolution stack: values, causality, gradients."""

import numpy as np
import pytest

from rcalearn.autodiff import Tensor, grad_check
from rcalearn.encoder import (
    ConvLayerSpec,
    GatedConvStack,
    dilated_causal_conv,
    gated_encode,
    receptive_field,
)
from rcalearn.errors import WindowTooShortError


def test_conv_oracle_d1():
    # out[t] = x[t] + x[t-1], valid region only
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
    k = Tensor(np.array([1.0, 1.0]))
    np.testing.assert_array_equal(dilated_causal_conv(x, k, 1).data, [3.0, 5.0, 7.0])


def test_conv_oracle_d2():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    k = Tensor(np.array([1.0, 1.0]))
    np.testing.assert_array_equal(dilated_causal_conv(x, k, 2).data, [4.0, 6.0, 8.0])


def test_conv_matches_manual_multichannel(rng):
    # (n, d_v, T) input with per-factor kernels, checked against a loop
    n, d, t, k, dil = 2, 3, 12, 3, 2
    x = rng.normal(size=(n, d, t))
    kern = rng.normal(size=(d, k))
    out = dilated_causal_conv(Tensor(x), Tensor(kern), dil).data
    span = (k - 1) * dil
    expect = np.zeros((n, d, t - span))
    for ti in range(span, t):
        for tau in range(k):
            expect[:, :, ti - span] += kern[:, tau] * x[:, :, ti - tau * dil]
    np.testing.assert_allclose(out, expect, rtol=1e-12)


def test_receptive_field():
    layers = [ConvLayerSpec(3, 1), ConvLayerSpec(3, 2)]
    assert receptive_field(layers) == 7
    assert receptive_field([ConvLayerSpec(2, 1)]) == 2


def test_window_too_short():
    x = Tensor(np.zeros((1, 1, 4)))
    k = Tensor(np.zeros((1, 3)))
    with pytest.raises(WindowTooShortError):
        dilated_causal_conv(x, k, 2)  # needs T > 4


def test_stack_output_length(rng):
    stack = GatedConvStack(rng, 2, [ConvLayerSpec(3, 1), ConvLayerSpec(3, 2)])
    assert stack.receptive_field == 7
    assert stack.output_length(14) == 8
    out = stack.encode(Tensor(rng.normal(size=(3, 2, 14))))
    assert out.shape == (3, 2, 8)


def test_gate_is_tanh_times_sigmoid(rng):
    # fix the kernels, then rebuild the gating by hand
    stack = GatedConvStack(rng, 1, [ConvLayerSpec(2, 1)])
    k_tanh, k_gate = stack.kernels[0]
    k_tanh.data[:] = np.array([[0.5, -0.25]])
    k_gate.data[:] = np.array([[1.0, 2.0]])
    x = rng.normal(size=(1, 1, 5))
    got = stack.encode(Tensor(x)).data
    conv = lambda k: k[0, 0] * x[:, :, 1:] + k[0, 1] * x[:, :, :-1]
    expect = np.tanh(conv(k_tanh.data)) * (1.0 / (1.0 + np.exp(-conv(k_gate.data))))
    np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_causality(rng):
    # perturbing the future never changes earlier outputs
    stack = GatedConvStack(rng, 2, [ConvLayerSpec(3, 1), ConvLayerSpec(3, 2)])
    x = rng.normal(size=(2, 2, 16))
    base = stack.encode(Tensor(x)).data
    cut = 12
    x2 = x.copy()
    x2[:, :, cut:] = rng.normal(size=(2, 2, 16 - cut)) * 10.0
    out2 = stack.encode(Tensor(x2)).data
    # output index t_out consumes inputs up to t_out + R - 1
    safe = cut - stack.receptive_field + 1
    np.testing.assert_array_equal(out2[:, :, :safe], base[:, :, :safe])
    assert not np.allclose(out2[:, :, safe:], base[:, :, safe:])


def test_entity_permutation_equivariance(rng):
    stack = GatedConvStack(rng, 2, [ConvLayerSpec(3, 1)])
    x = rng.normal(size=(4, 2, 9))
    perm = rng.permutation(4)
    np.testing.assert_allclose(
        stack.encode(Tensor(x[perm])).data,
        stack.encode(Tensor(x)).data[perm],
        rtol=1e-13,
    )


def test_encoder_gradients(rng):
    # each kernel is perturbed in place; the closure re-encodes fresh
    stack = GatedConvStack(rng, 2, [ConvLayerSpec(3, 1), ConvLayerSpec(3, 2)])
    x = rng.normal(size=(2, 2, 10))
    for kern in stack.parameters():
        err = grad_check(lambda _t: stack.encode(Tensor(x)).sum(), kern)
        assert err < 1e-4


def test_gated_encode_helper(rng):
    stack = GatedConvStack(rng, 1, [ConvLayerSpec(2, 1)])
    vals = rng.normal(size=(2, 1, 6))
    np.testing.assert_array_equal(
        gated_encode(vals, stack).data, stack.encode(Tensor(vals)).data
    )
