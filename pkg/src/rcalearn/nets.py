"""Small feed-forward building blocks on top of the autodiff tensors."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autodiff import Tensor


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    """Affine map ``x @ w + b`` with uniform +-1/sqrt(fan_in) weight init."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True):
        self.w = Tensor(uniform_init(rng, (n_in, n_out), n_in), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x.matmul(self.w)
        return y + self.b if self.b is not None else y

    def parameters(self) -> list[Tensor]:
        return [self.w] if self.b is None else [self.w, self.b]


class Mlp:
    """Dense stack with tanh between layers and a linear output layer."""

    def __init__(self, rng: np.random.Generator, sizes: Sequence[int]):
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least an input and an output size")
        self.layers = [Linear(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x).tanh()
        return self.layers[-1](x)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]
