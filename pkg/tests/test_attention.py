"""Cross-modal factor attention: similarity, weighting, pooling, recovery."""

import numpy as np
import pytest

from rcalearn.attention import (
    MultiFactorAttention,
    _similarity_scores,
    factor_similarity,
    recover_factors,
    weighted_pool,
)
from rcalearn.autodiff import Tensor, grad_check
from rcalearn.nets import Mlp


def _inputs(rng, n=3, d_m=2, d_l=2, t=5):
    h_m = Tensor(rng.normal(size=(n, d_m, t)))
    h_l = Tensor(rng.normal(size=(n, d_l, t)))
    return h_m, h_l


def test_similarity_shape_and_range(rng):
    h_m, h_l = _inputs(rng)
    w = Tensor(rng.normal(size=(5, 5)))
    sim = factor_similarity(h_m, h_l, w)
    assert sim.shape == (3, 2, 2)
    assert np.all(np.abs(sim.data) < 1.0)


def test_similarity_pre_tanh_is_bilinear(rng):
    h_m, h_l = _inputs(rng)
    w = Tensor(rng.normal(size=(5, 5)))
    base = _similarity_scores(h_m, h_l, w).data
    scaled = _similarity_scores(Tensor(2.5 * h_m.data), h_l, w).data
    np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-12)


def test_attention_weights_sum_to_one(rng):
    attn = MultiFactorAttention(rng, d_met=3, d_log=2, t_len=6)
    h_m = Tensor(rng.normal(size=(4, 3, 6)))
    h_l = Tensor(rng.normal(size=(4, 2, 6)))
    out = attn(h_m, h_l)
    np.testing.assert_allclose(out.a_met.data.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(out.a_log.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.a_met.data > 0.0)


def test_uniform_attention_flag(rng):
    attn = MultiFactorAttention(rng, d_met=3, d_log=2, t_len=6)
    h_m = Tensor(rng.normal(size=(4, 3, 6)))
    h_l = Tensor(rng.normal(size=(4, 2, 6)))
    out = attn(h_m, h_l, uniform=True)
    np.testing.assert_array_equal(out.a_met.data, np.full((4, 3), 1.0 / 3.0))
    np.testing.assert_array_equal(out.a_log.data, np.full((4, 2), 0.5))
    # similarity is still produced for the fusion weight
    assert out.similarity.shape == (4, 3, 2)


def test_weighted_pool_oracle():
    h = Tensor(np.array([[[1.0, 3.0], [3.0, 1.0]]]))  # (1, 2, 2)
    w = Tensor(np.array([[0.5, 0.5]]))
    np.testing.assert_array_equal(weighted_pool(h, w).data, [[2.0, 2.0]])


def test_recover_factors_identity_net(rng):
    # single linear layer with tiled identity blocks reproduces the pooled
    # vector in every factor slot
    t, d_v = 4, 3
    net = Mlp(rng, [t, d_v * t])
    for layer in net.layers:
        layer.w.data[:] = np.tile(np.eye(t), (1, d_v))
        layer.b.data[:] = 0.0
    pooled = Tensor(rng.normal(size=(2, t)))
    out = recover_factors(pooled, net, d_v)
    assert out.shape == (2, d_v * t)
    for f in range(d_v):
        np.testing.assert_allclose(
            out.data[:, f * t:(f + 1) * t], pooled.data, rtol=1e-12
        )


def test_recover_factors_width_mismatch(rng):
    net = Mlp(rng, [4, 10])  # not a multiple of t=4 times factors=3
    with pytest.raises(ValueError):
        recover_factors(Tensor(rng.normal(size=(2, 4))), net, 3)


def test_attention_gradients(rng):
    attn = MultiFactorAttention(rng, d_met=2, d_log=2, t_len=5)
    h_m = rng.normal(size=(3, 2, 5))
    h_l = rng.normal(size=(3, 2, 5))

    def run(_t):
        out = attn(Tensor(h_m), Tensor(h_l))
        return (
            out.recovered_met.sum()
            + out.recovered_log.sum()
            + out.similarity.sum()
        )

    for param in attn.parameters():
        assert grad_check(run, param) < 1e-4


def test_entity_permutation_equivariance(rng):
    attn = MultiFactorAttention(rng, d_met=2, d_log=2, t_len=5)
    h_m = rng.normal(size=(4, 2, 5))
    h_l = rng.normal(size=(4, 2, 5))
    perm = rng.permutation(4)
    out = attn(Tensor(h_m), Tensor(h_l))
    out_p = attn(Tensor(h_m[perm]), Tensor(h_l[perm]))
    np.testing.assert_allclose(out_p.pooled_met.data, out.pooled_met.data[perm], rtol=1e-12)
    np.testing.assert_allclose(out_p.similarity.data, out.similarity.data[perm], rtol=1e-12)
