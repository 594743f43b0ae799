"""Minimal parameter-container layer on top of the tensor core."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ConfigError, Tensor

INIT_SCHEMES = ("fan_in_uniform", "fan_in_normal", "zeros")


def init_param(shape, fan_in: int, rng: np.random.Generator,
               scheme: str = "fan_in_uniform") -> Tensor:
    """Fan-in scaled initialization; bound/std is 1/sqrt(fan_in)."""
    if scheme not in INIT_SCHEMES:
        raise ConfigError(f"unknown init scheme {scheme!r}; "
                          f"choose one of {INIT_SCHEMES}")
    if scheme == "zeros":
        data = np.zeros(shape)
    else:
        scale = 1.0 / np.sqrt(max(fan_in, 1))
        if scheme == "fan_in_uniform":
            data = rng.uniform(-scale, scale, size=shape)
        else:
            data = rng.normal(0.0, scale, size=shape)
    return Tensor(data, requires_grad=True)


def _walk(value, key):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield key, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{key}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{key}.{i}")


class Module:
    """Base class providing recursive named-parameter discovery.

    Child modules and (possibly nested) lists of modules are picked up
    automatically, in attribute insertion order, which keeps parameter
    naming deterministic.
    """

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """y = x @ w + b for token matrices x[L, d_in]."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, scheme: str = "fan_in_uniform"):
        self.w = init_param((d_in, d_out), d_in, rng, scheme)
        self.b = init_param((d_out,), d_in, rng, scheme) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y


class Conv2d(Module):
    """3x3-style convolution over single images [C, H, W]."""

    def __init__(self, c_in: int, c_out: int, k: int,
                 rng: np.random.Generator, *, stride: int = 1,
                 padding: int = 0, dilation: int = 1, groups: int = 1,
                 bias: bool = True, scheme: str = "fan_in_uniform"):
        fan_in = (c_in // groups) * k * k
        self.w = init_param((c_out, c_in // groups, k, k), fan_in, rng, scheme)
        self.b = init_param((c_out,), fan_in, rng, scheme) if bias else None
        self.stride, self.padding = stride, padding
        self.dilation, self.groups = dilation, groups

    def forward(self, x: Tensor) -> Tensor:
        y = T.conv2d(T.reshape(x, (1, *x.shape)), self.w, self.b,
                     stride=self.stride, padding=self.padding,
                     dilation=self.dilation, groups=self.groups)
        return T.reshape(y, y.shape[1:])


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


def tokens_from_grid(x: Tensor) -> Tensor:
    """[C, H, W] -> [H*W, C] row-major token matrix."""
    c = x.shape[0]
    return T.transpose(T.reshape(x, (c, -1)), (1, 0))


def grid_from_tokens(x: Tensor, h: int, w: int) -> Tensor:
    """[H*W, C] -> [C, H, W]."""
    return T.reshape(T.transpose(x, (1, 0)), (x.shape[1], h, w))
