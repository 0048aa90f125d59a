"""Gated dilated causal convolutions encoding each modality's temporal
structure. Convolutions are valid (no padding) and depthwise: each factor
channel is filtered independently; cross-factor mixing happens later in the
attention module."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .errors import WindowTooShortError
from .nets import uniform_init


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel: int
    dilation: int

    def __post_init__(self):
        if self.kernel < 1 or self.dilation < 1:
            raise ValueError("kernel and dilation must be >= 1")


def receptive_field(layers: Sequence[ConvLayerSpec]) -> int:
    return 1 + sum((spec.kernel - 1) * spec.dilation for spec in layers)


def dilated_causal_conv(x: Tensor, kernel: Tensor, dilation: int) -> Tensor:
    """out[t] = sum_tau kernel[tau] * x[t - dilation*tau], valid positions only.

    Accepts (n, d_v, T) input with a (d_v, K) kernel (depthwise), or a 1-D
    series with a 1-D kernel. Output length is T - (K-1)*dilation.
    """
    flat = x.ndim == 1
    if flat:
        x = x.reshape(1, 1, x.shape[0])
        kernel = kernel.reshape(1, kernel.shape[0])
    n, d_v, t = x.shape
    k = kernel.shape[1]
    span = (k - 1) * dilation
    if t <= span:
        raise WindowTooShortError(f"series length {t} needs more than {span} steps")
    t_out = t - span
    out: Tensor | None = None
    for tau in range(k):
        tap = kernel.narrow(1, tau, 1).reshape(1, d_v, 1)
        term = tap * x.narrow(2, span - dilation * tau, t_out)
        out = term if out is None else out + term
    assert out is not None
    return out.reshape(t_out) if flat else out


class GatedConvStack:
    """Stacked gated conv layers for one (modality, window) combination.

    Each layer holds separate tanh-branch and sigmoid-branch kernels; a layer
    maps (n, d_v, T) to (n, d_v, T - (K-1)*d) via tanh(conv) * sigmoid(conv).
    """

    def __init__(self, rng: np.random.Generator, n_factors: int,
                 layers: Sequence[ConvLayerSpec | tuple[int, int]]):
        self.layers = [
            spec if isinstance(spec, ConvLayerSpec) else ConvLayerSpec(*spec)
            for spec in layers
        ]
        if not self.layers:
            raise ValueError("conv stack needs at least one layer")
        self.kernels: list[tuple[Tensor, Tensor]] = []
        for spec in self.layers:
            shape = (n_factors, spec.kernel)
            self.kernels.append((
                Tensor(uniform_init(rng, shape, spec.kernel), requires_grad=True),
                Tensor(uniform_init(rng, shape, spec.kernel), requires_grad=True),
            ))

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.layers)

    def output_length(self, t_in: int) -> int:
        return t_in - (self.receptive_field - 1)

    def encode(self, x: Tensor) -> Tensor:
        """Apply every gated layer; output entries are strictly inside (-1, 1)."""
        for spec, (k_tanh, k_gate) in zip(self.layers, self.kernels):
            a = dilated_causal_conv(x, k_tanh, spec.dilation).tanh()
            b = dilated_causal_conv(x, k_gate, spec.dilation).sigmoid()
            x = a * b
        return x

    def parameters(self) -> list[Tensor]:
        return [k for pair in self.kernels for k in pair]


def gated_encode(values: np.ndarray | Tensor, stack: GatedConvStack) -> Tensor:
    """Encode raw (n, d_v, T) window values with the given stack."""
    x = values if isinstance(values, Tensor) else Tensor(values)
    return stack.encode(x)
