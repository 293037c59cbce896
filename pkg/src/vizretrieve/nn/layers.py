"""Parameterized building blocks on top of the autodiff Tensor.

Initialization always draws from a caller-supplied numpy Generator so that
network construction is reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        scale = np.sqrt(2.0 / in_dim)
        self.weight = Tensor(rng.normal(0.0, scale, size=(in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        params = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            params[f"{prefix}.bias"] = self.bias
        return params


class Conv2d:
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: np.random.Generator,
        pad: int = 0,
        stride: int = 1,
    ):
        fan_in = in_ch * kernel * kernel
        scale = np.sqrt(2.0 / fan_in)
        self.weight = Tensor(
            rng.normal(0.0, scale, size=(out_ch, in_ch, kernel, kernel)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)
        self.pad = pad
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


class BatchNorm1d:
    """Feature-wise normalization over the batch axis.

    Train mode normalizes with batch statistics (differentiably, composed
    from primitive ops); eval mode uses the tracked running statistics as
    constants.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            mu = T.batch_mean(x, axis=0, keepdims=True)
            var = T.batch_var(x, axis=0, keepdims=True)
            self.running_mean = (
                (1.0 - self.momentum) * self.running_mean + self.momentum * mu.data[0]
            )
            self.running_var = (
                (1.0 - self.momentum) * self.running_var + self.momentum * var.data[0]
            )
        else:
            mu = Tensor(self.running_mean[None, :])
            var = Tensor(self.running_var[None, :])
        centered = T.add(x, T.mul(mu, -1.0))
        denom = T.sqrt(T.add(var, self.eps))
        return T.add(T.mul(T.div(centered, denom), self.gamma), self.beta)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def named_buffers(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.running_mean": self.running_mean,
            f"{prefix}.running_var": self.running_var,
        }

    def load_buffers(self, prefix: str, buffers: dict[str, np.ndarray]) -> None:
        self.running_mean = buffers[f"{prefix}.running_mean"].copy()
        self.running_var = buffers[f"{prefix}.running_var"].copy()


class BatchNorm2d(BatchNorm1d):
    """Per-channel normalization of NCHW maps; statistics pool over N, H, W."""

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        n, c, h, w = x.data.shape
        flat = T.reshape(T.transpose(x, (0, 2, 3, 1)), (n * h * w, c))
        out = super().__call__(flat, training)
        return T.transpose(T.reshape(out, (n, h, w, c)), (0, 3, 1, 2))


def collect_params(named: dict[str, Tensor]) -> list[Tensor]:
    return [named[k] for k in sorted(named)]


def load_params(named: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    for name, param in named.items():
        if name not in arrays:
            raise KeyError(f"checkpoint is missing parameter {name!r}")
        if arrays[name].shape != param.data.shape:
            raise ValueError(
                f"parameter {name!r}: checkpoint shape {arrays[name].shape}, "
                f"model shape {param.data.shape}"
            )
        param.data = arrays[name].astype(np.float64).copy()
