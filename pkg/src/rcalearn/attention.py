"""Cross-modal multi-factor attention: factor-similarity maps, per-factor
importance weights, attention-pooled entity representations, and the recovery
networks that expand pooled representations back to per-factor signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .nets import Mlp, uniform_init


def _similarity_scores(h_met: Tensor, h_log: Tensor, w_sim: Tensor) -> Tensor:
    """Bilinear pre-activation scores, (n, d_M, d_L)."""
    if h_met.shape[2] != h_log.shape[2] or w_sim.shape != (h_met.shape[2],) * 2:
        raise ValueError("similarity inputs must share one time length")
    return h_met.matmul(w_sim).matmul(h_log.transpose((0, 2, 1)))


def factor_similarity(h_met: Tensor, h_log: Tensor, w_sim: Tensor) -> Tensor:
    """C = tanh(H_M W H_L^T) per entity; entries in (-1, 1)."""
    return _similarity_scores(h_met, h_log, w_sim).tanh()


def factor_attention(
    h_met: Tensor,
    h_log: Tensor,
    similarity: Tensor,
    w_log: Tensor,
    w_met: Tensor,
    score_log: Tensor,
    score_met: Tensor,
) -> tuple[Tensor, Tensor]:
    """Per-factor importance weights (a_met, a_log), each row summing to 1.

    Z_log = tanh(H_L W_log + C^T H_M W_met) scored against score_log;
    Z_met = tanh(H_M W_met + C H_L W_log) scored against score_met;
    weights are softmax over the factor axis.
    """
    met_proj = h_met.matmul(w_met)
    log_proj = h_log.matmul(w_log)
    z_log = (log_proj + similarity.transpose((0, 2, 1)).matmul(met_proj)).tanh()
    z_met = (met_proj + similarity.matmul(log_proj)).tanh()
    n = h_met.shape[0]
    a_log = z_log.matmul(score_log).reshape(n, h_log.shape[1]).softmax(axis=1)
    a_met = z_met.matmul(score_met).reshape(n, h_met.shape[1]).softmax(axis=1)
    return a_met, a_log


def weighted_pool(h: Tensor, weights: Tensor) -> Tensor:
    """Convex combination over the factor axis: (n, d_v, T) x (n, d_v) -> (n, T)."""
    if weights.shape != h.shape[:2]:
        raise ValueError("weight shape must match (entities, factors)")
    n, d_v, _ = h.shape
    return (weights.reshape(n, d_v, 1) * h).sum(axis=1)


def recover_factors(pooled: Tensor, net: Mlp, n_factors: int) -> Tensor:
    """Expand pooled (n, T) back to per-factor signals, flattened (n, d_v*T).

    The flat layout is factor-major: reshaping to (n, d_v, T) is bijective.
    """
    out = net(pooled)
    if out.shape[1] != n_factors * pooled.shape[1]:
        raise ValueError("recovery net output width must be d_v * T")
    return out


@dataclass
class AttentionOutput:
    similarity: Tensor      # (n, d_M, d_L)
    a_met: Tensor           # (n, d_M)
    a_log: Tensor           # (n, d_L)
    pooled_met: Tensor      # (n, T)
    pooled_log: Tensor      # (n, T)
    recovered_met: Tensor   # (n, d_M*T)
    recovered_log: Tensor   # (n, d_L*T)


class MultiFactorAttention:
    """Attention parameters for one window length (historical or streaming)."""

    def __init__(self, rng: np.random.Generator, d_met: int, d_log: int,
                 t_len: int, recovery_hidden_scale: int = 2):
        self.t_len = t_len
        self.w_sim = Tensor(uniform_init(rng, (t_len, t_len), t_len), requires_grad=True)
        self.w_log = Tensor(uniform_init(rng, (t_len, t_len), t_len), requires_grad=True)
        self.w_met = Tensor(uniform_init(rng, (t_len, t_len), t_len), requires_grad=True)
        self.score_log = Tensor(uniform_init(rng, (t_len, 1), t_len), requires_grad=True)
        self.score_met = Tensor(uniform_init(rng, (t_len, 1), t_len), requires_grad=True)
        hidden = recovery_hidden_scale * t_len
        self.recover_met = Mlp(rng, [t_len, hidden, d_met * t_len])
        self.recover_log = Mlp(rng, [t_len, hidden, d_log * t_len])

    def __call__(self, h_met: Tensor, h_log: Tensor, uniform: bool = False) -> AttentionOutput:
        """Full attention pass; `uniform` replaces learned weights with 1/d_v."""
        similarity = factor_similarity(h_met, h_log, self.w_sim)
        if uniform:
            n, d_m, _ = h_met.shape
            d_l = h_log.shape[1]
            a_met = Tensor(np.full((n, d_m), 1.0 / d_m))
            a_log = Tensor(np.full((n, d_l), 1.0 / d_l))
        else:
            a_met, a_log = factor_attention(
                h_met, h_log, similarity,
                self.w_log, self.w_met, self.score_log, self.score_met,
            )
        pooled_met = weighted_pool(h_met, a_met)
        pooled_log = weighted_pool(h_log, a_log)
        return AttentionOutput(
            similarity=similarity,
            a_met=a_met,
            a_log=a_log,
            pooled_met=pooled_met,
            pooled_log=pooled_log,
            recovered_met=recover_factors(pooled_met, self.recover_met, h_met.shape[1]),
            recovered_log=recover_factors(pooled_log, self.recover_log, h_log.shape[1]),
        )

    def parameters(self) -> list[Tensor]:
        own = [self.w_sim, self.w_log, self.w_met, self.score_log, self.score_met]
        return own + self.recover_met.parameters() + self.recover_log.parameters()
