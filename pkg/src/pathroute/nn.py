"""Parameter-holding layers on top of the functional ops."""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import Parameter, Tensor


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d:
    def __init__(self, name: str, in_ch: int, out_ch: int, k: int = 3, stride: int = 1,
                 dilation: int = 1, rng: np.random.Generator | None = None,
                 zero_init: bool = False):
        self.stride = stride
        self.dilation = dilation
        self.padding = dilation * (k - 1) // 2  # same-size output at stride 1
        if zero_init:
            w = np.zeros((out_ch, in_ch, k, k), dtype=np.float32)
        else:
            w = _fan_in_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k)
        self.weight = Parameter(name + ".weight", w)
        self.bias = Parameter(name + ".bias", np.zeros(out_ch, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight.value, self.bias.value,
                          stride=self.stride, padding=self.padding, dilation=self.dilation)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


class Linear:
    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None):
        self.weight = Parameter(name + ".weight",
                                _fan_in_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(name + ".bias", np.zeros(out_features, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight.value, self.bias.value)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


class LSTMCell:
    def __init__(self, name: str, in_features: int, hidden: int,
                 rng: np.random.Generator | None = None):
        self.hidden = hidden
        self.wx = Parameter(name + ".wx", _fan_in_uniform(rng, (4 * hidden, in_features), in_features))
        self.wh = Parameter(name + ".wh", _fan_in_uniform(rng, (4 * hidden, hidden), hidden))
        self.bias = Parameter(name + ".bias", np.zeros(4 * hidden, dtype=np.float32))

    def __call__(self, x: Tensor, h: Tensor, c: Tensor):
        return ops.lstm_step(x, h, c, self.wx.value, self.wh.value, self.bias.value)

    def parameters(self) -> list[Parameter]:
        return [self.wx, self.wh, self.bias]
