"""Online causal-graph learning: GNN forecasting over the running adjacency
plus per-batch deltas, attention-weighted temporal loss, InfoNCE cross-modal
alignment, modality-weighted graph fusion, and the penalized Adam loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .attention import MultiFactorAttention
from .autodiff import Adam, Tensor, acyclicity_penalty, concat
from .encoder import ConvLayerSpec, GatedConvStack
from .errors import NonFiniteError, TrainingDivergedError, WindowTooShortError
from .nets import Linear
from .telemetry import LOGS_MODALITY, METRICS_MODALITY, TelemetryBatch

logger = logging.getLogger(__name__)

HISTORICAL = "historical"
STREAMING = "streaming"

_NEIGHBOR_THRESHOLD = 1e-6


@dataclass(frozen=True)
class GraphState:
    """Running adjacency between batches; node n-1 is the KPI."""

    a_old: np.ndarray
    batch_index: int
    nodes: list[str]

    def __post_init__(self):
        n = len(self.nodes)
        if self.a_old.shape != (n, n):
            raise ValueError("adjacency shape does not match the node list")

    @property
    def kpi_node(self) -> str:
        return self.nodes[-1]


@dataclass(frozen=True)
class LossReport:
    """Loss components for one trained batch; total must recompose exactly."""

    total: float
    mi: float
    temporal: float
    sparse: float
    acyclicity: float
    lambda_temporal: float
    lambda_sparse: float
    lambda_acyclic: float
    mi_weight: float = 1.0

    def __post_init__(self):
        recomposed = (
            self.mi_weight * self.mi
            + self.lambda_temporal * self.temporal
            + self.lambda_sparse * self.sparse
            + self.lambda_acyclic * self.acyclicity
        )
        if abs(self.total - recomposed) > 1e-9 * max(1.0, abs(self.total)):
            raise ValueError("loss components do not recompose the total")


class MiHead:
    """Projection network for the InfoNCE terms, shared across modalities.

    The historical and streaming windows have different lengths, so each gets
    its own input layer; the trunk is shared.
    """

    def __init__(self, rng: np.random.Generator, t_hist: int, t_stream: int,
                 hidden: int = 64, out: int = 32):
        self.input_hist = Linear(rng, t_hist, hidden)
        self.input_stream = Linear(rng, t_stream, hidden)
        self.output = Linear(rng, hidden, out)

    def project(self, pooled: Tensor, window: str) -> Tensor:
        first = self.input_hist if window == HISTORICAL else self.input_stream
        return self.output(first(pooled).tanh())

    def parameters(self) -> list[Tensor]:
        return (
            self.input_hist.parameters()
            + self.input_stream.parameters()
            + self.output.parameters()
        )


# -- loss building blocks -----------------------------------------------------


def _forecast_split(window_len: int, receptive: int) -> tuple[int, int]:
    """Split a raw window into (t_pred, prefix encode length).

    The forecast covers the last t_pred raw steps and may only consume the
    leading window_len - t_pred steps, keeping inputs strictly earlier than
    every target; t_pred takes half of the encodable span so the tail is long
    enough that a mapping cannot simply interpolate it.
    """
    encodable = window_len - (receptive - 1)
    if encodable < 2:
        raise WindowTooShortError(
            f"window of {window_len} steps cannot host a lagged forecast"
        )
    t_pred = encodable // 2
    return t_pred, encodable - t_pred


def gnn_forecast(recovered: Tensor, a_eff: Tensor, weight: Tensor) -> Tensor:
    """Message-passing forecast: A_eff (recovered || neighbor_mean) W.

    Neighbors of node j are the k with |A_eff[k, j]| above a small threshold;
    membership is read from current values and is not differentiated through.
    """
    n, width = recovered.shape
    if a_eff.shape != (n, n) or weight.shape[0] != 2 * width:
        raise ValueError("gnn_forecast shapes are inconsistent")
    mask = np.abs(a_eff.data) > _NEIGHBOR_THRESHOLD
    counts = mask.sum(axis=0)
    averaging = np.divide(
        mask.T, np.maximum(counts, 1)[:, None], dtype=np.float64
    )
    neighbor_mean = Tensor(averaging).matmul(recovered)
    combined = concat([recovered, neighbor_mean], axis=1)
    return a_eff.matmul(combined).matmul(weight)


def temporal_loss(
    terms: Sequence[tuple[Tensor, Tensor, Tensor]],
    n_nodes: int,
    total_factors: int,
) -> Tensor:
    """Attention-weighted squared forecast error, normalized by n*(d_M+d_L).

    Each term is (target (n,d,T), forecast (n,d,T), weights (n,d)); terms from
    the historical and streaming windows of both modalities are summed.
    """
    acc: Tensor | None = None
    for target, forecast, weights in terms:
        diff = target - forecast
        per_factor = (diff * diff).sum(axis=2)
        term = (weights * per_factor).sum()
        acc = term if acc is None else acc + term
    if acc is None:
        raise ValueError("temporal_loss needs at least one term")
    return acc * (1.0 / float(n_nodes * total_factors))


def infonce_mi(pooled_met: Tensor, pooled_log: Tensor, head: MiHead, window: str) -> Tensor:
    """Contrastive alignment of paired cross-modal entity representations.

    sim(a, b) = exp(cos(a, b)); each entity's log-side projection is the
    positive against every other entity's as in-batch negatives.
    """
    z_met = head.project(pooled_met, window)
    z_log = head.project(pooled_log, window)
    norm_met = (z_met * z_met).sum(axis=1, keepdims=True).sqrt()
    norm_log = (z_log * z_log).sum(axis=1, keepdims=True).sqrt()
    dots = z_met.matmul(z_log.transpose((1, 0)))
    cosine = dots / (norm_met.matmul(norm_log.transpose((1, 0))) + 1e-8)
    n = pooled_met.shape[0]
    positives = (cosine * Tensor(np.eye(n))).sum(axis=1)
    return (cosine.exp().sum(axis=1).log() - positives).mean()


def modality_weight(similarity: Tensor) -> Tensor:
    """Fusion weight s_M in (0,1) from the streaming-window similarity maps."""
    met_mass = similarity.sum(axis=2).exp().sum()
    log_mass = similarity.sum(axis=1).exp().sum()
    return met_mass / (met_mass + log_mass)


def fuse(a_old, delta_met, delta_log, s_met):
    """A = (1 - s_M)(A_old + dA_L) + s_M (A_old + dA_M); exactly linear."""
    return (1.0 - s_met) * (a_old + delta_log) + s_met * (a_old + delta_met)


def write_graph_csv(nodes: Sequence[str], adjacency: np.ndarray, path: str) -> None:
    """Dense adjacency checkpoint; weight of src->dst is adjacency[dst, src]."""
    index = {name: i for i, name in enumerate(nodes)}
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["src", "dst", "weight"])
        for src in nodes:
            for dst in nodes:
                writer.writerow([src, dst, repr(float(adjacency[index[dst], index[src]]))])


# -- the estimator --------------------------------------------------------------


class CausalGraphLearner(BaseEstimator):
    """Online causal-graph learner over paired telemetry modalities.

    One instance tracks one incident: call `partial_fit` first with the
    historical batch pair (index 0), then with each consecutive streaming
    pair. After every streaming batch the fused adjacency is availabe as
    `adjacency_` (rows index effects, columns causes) and `predict` ranks
    likely root-cause entities from it.
    """

    def __init__(
        self,
        conv_kernel: int = 3,
        conv_dilations: Sequence[int] = (1, 2),
        lambda_temporal: float = 100.0,
        lambda_sparse: float = 0.5,
        lambda_acyclic: float = 1.0,
        mi_weight: float = 1.0,
        uniform_attention: bool = False,
        iterations: int = 100,
        lr: float = 1e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_eps: float = 1e-8,
        mi_hidden: int = 64,
        mi_out: int = 32,
        recovery_hidden_scale: int = 2,
        seed: int = 0,
    ):
        self.conv_kernel = conv_kernel
        self.conv_dilations = conv_dilations
        self.lambda_temporal = lambda_temporal
        self.lambda_sparse = lambda_sparse
        self.lambda_acyclic = lambda_acyclic
        self.mi_weight = mi_weight
        self.uniform_attention = uniform_attention
        self.iterations = iterations
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.mi_hidden = mi_hidden
        self.mi_out = mi_out
        self.recovery_hidden_scale = recovery_hidden_scale
        self.seed = seed

    # -- fitting ------------------------------------------------------------

    def partial_fit(self, metrics_batch: TelemetryBatch, logs_batch: TelemetryBatch):
        """Consume one batch pair; index 0 seeds history, later indexes train."""
        self._validate_pair(metrics_batch, logs_batch)
        if not hasattr(self, "graph_state_"):
            if metrics_batch.index != 0:
                raise ValueError("first partial_fit call must be the historical pair")
            self._initialize(metrics_batch, logs_batch)
            return self
        if metrics_batch.index == 0:
            raise ValueError("historical pair was already consumed")
        if metrics_batch.entities != self.nodes_:
            raise ValueError("streaming batch entities do not match the fitted nodes")
        self._train_batch(metrics_batch, logs_batch)
        return self

    @property
    def adjacency_(self) -> np.ndarray:
        return self.graph_state_.a_old

    def predict(self, top_k: int | None = None):
        """Rank root-cause candidates from the current graph (KPI restart)."""
        from . import ranking

        state = self.graph_state_
        p = ranking.transition_matrix(state.a_old)
        r0 = np.zeros(len(state.nodes))
        r0[-1] = 1.0
        scores = ranking.rwr(p, r0)
        k = top_k if top_k is not None else len(state.nodes) - 1
        return ranking.rank(scores, state.nodes, k, state.batch_index)

    # -- internals ------------------------------------------------------------

    def _validate_pair(self, metrics_batch: TelemetryBatch, logs_batch: TelemetryBatch) -> None:
        if metrics_batch.modality != METRICS_MODALITY or logs_batch.modality != LOGS_MODALITY:
            raise ValueError("partial_fit expects (metrics, logs) batches in that order")
        if metrics_batch.index != logs_batch.index:
            raise ValueError("modality batches have different indexes")
        if metrics_batch.entities != logs_batch.entities:
            raise ValueError("modality batches disagree on entities")
        if metrics_batch.length != logs_batch.length:
            raise ValueError("modality batches disagree on window length")

    def _conv_specs(self) -> list[ConvLayerSpec]:
        return [ConvLayerSpec(self.conv_kernel, d) for d in self.conv_dilations]

    def _initialize(self, metrics_batch: TelemetryBatch, logs_batch: TelemetryBatch) -> None:
        self.nodes_ = list(metrics_batch.entities)
        self.d_met_ = metrics_batch.n_factors
        self.d_log_ = logs_batch.n_factors
        n = len(self.nodes_)
        self._rng = np.random.default_rng(self.seed)
        specs = self._conv_specs()
        self._enc_met_hist = GatedConvStack(self._rng, self.d_met_, specs)
        self._enc_log_hist = GatedConvStack(self._rng, self.d_log_, specs)
        self._t_hist = self._enc_met_hist.output_length(metrics_batch.length)
        # forecast split: the last t_pred raw steps are predicted from the
        # window's leading prefix only, so targets never leak into the inputs
        self._t_pred_hist, self._t_pre_hist = _forecast_split(
            metrics_batch.length, self._enc_met_hist.receptive_field
        )
        self._attn_hist = MultiFactorAttention(
            self._rng, self.d_met_, self.d_log_, self._t_hist, self.recovery_hidden_scale
        )
        self._attn_hist_prefix = MultiFactorAttention(
            self._rng, self.d_met_, self.d_log_, self._t_pre_hist, self.recovery_hidden_scale
        )
        self._gnn_met_hist = self._gnn_weight(
            self.d_met_ * self._t_pre_hist, self.d_met_ * self._t_pred_hist
        )
        self._gnn_log_hist = self._gnn_weight(
            self.d_log_ * self._t_pre_hist, self.d_log_ * self._t_pred_hist
        )
        self._hist_met = Tensor(metrics_batch.values)
        self._hist_log = Tensor(logs_batch.values)
        # no self-loops in the stored graph: the fused adjacency and the
        # acyclicity target are masked off-diagonal at every batch boundary
        self._offdiag = 1.0 - np.eye(n)
        self._stream_built = False
        self.graph_state_ = GraphState(np.zeros((n, n)), 0, self.nodes_)
        self.loss_history_: list[LossReport] = []
        self.iteration_losses_: list[float] = []

    def _gnn_weight(self, in_width: int, out_width: int) -> Tensor:
        from .nets import uniform_init

        return Tensor(
            uniform_init(self._rng, (2 * in_width, out_width), 2 * in_width),
            requires_grad=True,
        )

    def _ensure_stream(self, length: int) -> None:
        if self._stream_built:
            return
        specs = self._conv_specs()
        self._enc_met_stream = GatedConvStack(self._rng, self.d_met_, specs)
        self._enc_log_stream = GatedConvStack(self._rng, self.d_log_, specs)
        self._t_stream = self._enc_met_stream.output_length(length)
        self._t_pred_stream, self._t_pre_stream = _forecast_split(
            length, self._enc_met_stream.receptive_field
        )
        self._attn_stream = MultiFactorAttention(
            self._rng, self.d_met_, self.d_log_, self._t_stream, self.recovery_hidden_scale
        )
        self._attn_stream_prefix = MultiFactorAttention(
            self._rng, self.d_met_, self.d_log_, self._t_pre_stream, self.recovery_hidden_scale
        )
        self._gnn_met_stream = self._gnn_weight(
            self.d_met_ * self._t_pre_stream, self.d_met_ * self._t_pred_stream
        )
        self._gnn_log_stream = self._gnn_weight(
            self.d_log_ * self._t_pre_stream, self.d_log_ * self._t_pred_stream
        )
        self._mi_head = MiHead(
            self._rng, self._t_hist, self._t_stream, self.mi_hidden, self.mi_out
        )
        self._stream_built = True

    def _parameters(self) -> list[Tensor]:
        params = (
            self._enc_met_hist.parameters()
            + self._enc_log_hist.parameters()
            + self._attn_hist.parameters()
            + self._attn_hist_prefix.parameters()
            + [self._gnn_met_hist, self._gnn_log_hist]
        )
        if self._stream_built:
            params += (
                self._enc_met_stream.parameters()
                + self._enc_log_stream.parameters()
                + self._attn_stream.parameters()
                + self._attn_stream_prefix.parameters()
                + [self._gnn_met_stream, self._gnn_log_stream]
                + self._mi_head.parameters()
            )
        return params

    def _objective(
        self,
        stream_met: Tensor,
        stream_log: Tensor,
        delta_met: Tensor,
        delta_log: Tensor,
    ) -> tuple[Tensor, dict[str, float]]:
        """Build the full per-batch loss graph; returns (total, float parts)."""
        n = len(self.nodes_)
        h_met_hist = self._enc_met_hist.encode(self._hist_met)
        h_log_hist = self._enc_log_hist.encode(self._hist_log)
        h_met_stream = self._enc_met_stream.encode(stream_met)
        h_log_stream = self._enc_log_stream.encode(stream_log)
        att_hist = self._attn_hist(h_met_hist, h_log_hist, uniform=self.uniform_attention)
        att_stream = self._attn_stream(h_met_stream, h_log_stream, uniform=self.uniform_attention)
        # the conv is causal and position-local, so the leading slice of the
        # full encoding is exactly the encoding of the raw prefix; these
        # prefix-only features are what the forecasts may consume
        pre_h, pre_s = self._t_pre_hist, self._t_pre_stream
        att_hist_pre = self._attn_hist_prefix(
            h_met_hist.narrow(2, 0, pre_h), h_log_hist.narrow(2, 0, pre_h),
            uniform=self.uniform_attention,
        )
        att_stream_pre = self._attn_stream_prefix(
            h_met_stream.narrow(2, 0, pre_s), h_log_stream.narrow(2, 0, pre_s),
            uniform=self.uniform_attention,
        )

        a_old = Tensor(self.graph_state_.a_old)
        mask = Tensor(self._offdiag)
        t_h, t_s = self._t_pred_hist, self._t_pred_stream
        forecasts = [
            gnn_forecast(att_hist_pre.recovered_met, a_old, self._gnn_met_hist)
            .reshape(n, self.d_met_, t_h),
            gnn_forecast(att_hist_pre.recovered_log, a_old, self._gnn_log_hist)
            .reshape(n, self.d_log_, t_h),
            # diagonal masked: a free self-route would interpolate each tail
            # from the entity's own prefix and starve every cross edge
            gnn_forecast(att_stream_pre.recovered_met, (a_old + delta_met) * mask, self._gnn_met_stream)
            .reshape(n, self.d_met_, t_s),
            gnn_forecast(att_stream_pre.recovered_log, (a_old + delta_log) * mask, self._gnn_log_stream)
            .reshape(n, self.d_log_, t_s),
        ]
        targets = [
            self._hist_met.narrow(2, self._hist_met.shape[2] - t_h, t_h),
            self._hist_log.narrow(2, self._hist_log.shape[2] - t_h, t_h),
            stream_met.narrow(2, stream_met.shape[2] - t_s, t_s),
            stream_log.narrow(2, stream_log.shape[2] - t_s, t_s),
        ]
        weights = [att_hist.a_met, att_hist.a_log, att_stream.a_met, att_stream.a_log]
        l_temporal = temporal_loss(
            list(zip(targets, forecasts, weights)), n, self.d_met_ + self.d_log_
        )
        l_mi = (
            infonce_mi(att_hist.pooled_met, att_hist.pooled_log, self._mi_head, HISTORICAL)
            + infonce_mi(att_stream.pooled_met, att_stream.pooled_log, self._mi_head, STREAMING)
        )
        s_met = modality_weight(att_stream.similarity)
        fused = fuse(a_old, delta_met, delta_log, s_met) * mask
        l_sparse = delta_log.abs().sum() + delta_met.abs().sum()
        h_pen = acyclicity_penalty(fused)
        total = (
            self.mi_weight * l_mi
            + self.lambda_temporal * l_temporal
            + self.lambda_sparse * l_sparse
            + self.lambda_acyclic * h_pen
        )
        parts = {
            "total": total.item(),
            "mi": l_mi.item(),
            "temporal": l_temporal.item(),
            "sparse": l_sparse.item(),
            "acyclicity": h_pen.item(),
            "s_met": s_met.item(),
        }
        return total, parts

    def _train_batch(self, metrics_batch: TelemetryBatch, logs_batch: TelemetryBatch) -> None:
        self._ensure_stream(metrics_batch.length)
        n = len(self.nodes_)
        stream_met = Tensor(metrics_batch.values)
        stream_log = Tensor(logs_batch.values)
        delta_met = Tensor(np.zeros((n, n)), requires_grad=True)
        delta_log = Tensor(np.zeros((n, n)), requires_grad=True)
        optimizer = Adam(
            self._parameters() + [delta_met, delta_log],
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps,
        )
        iteration_losses: list[float] = []
        parts: dict[str, float] = {}
        for iteration in range(self.iterations):
            optimizer.zero_grad()
            try:
                total, parts = self._objective(stream_met, stream_log, delta_met, delta_log)
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"batch {metrics_batch.index}, iteration {iteration}: {exc}; "
                    f"last parts: {parts}"
                ) from exc
            iteration_losses.append(parts["total"])
            total.backward()
            optimizer.step()
        try:
            _, parts = self._objective(stream_met, stream_log, delta_met, delta_log)
        except NonFiniteError as exc:
            raise TrainingDivergedError(
                f"batch {metrics_batch.index}, final evaluation: {exc}"
            ) from exc
        if iteration_losses and parts["total"] > iteration_losses[0]:
            logger.warning(
                "batch %d: loss did not decrease (%.4f -> %.4f)",
                metrics_batch.index, iteration_losses[0], parts["total"],
            )
        s_met = parts["s_met"]
        fused = (
            self.graph_state_.a_old
            + (1.0 - s_met) * delta_log.data
            + s_met * delta_met.data
        )
        np.fill_diagonal(fused, 0.0)
        self.graph_state_ = GraphState(fused, metrics_batch.index, self.nodes_)
        self.iteration_losses_ = iteration_losses
        self.loss_history_.append(LossReport(
            total=parts["total"],
            mi=parts["mi"],
            temporal=parts["temporal"],
            sparse=parts["sparse"],
            acyclicity=parts["acyclicity"],
            lambda_temporal=self.lambda_temporal,
            lambda_sparse=self.lambda_sparse,
            lambda_acyclic=self.lambda_acyclic,
            mi_weight=self.mi_weight,
        ))
