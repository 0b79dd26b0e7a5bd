"""Parameter containers and the small layer set the network is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Holds parameters and child modules as plain attributes.

    Parameters are discovered by walking attributes in definition order, so
    names and iteration order are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk(value, prefix + name)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _walk(value, name: str) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _uniform(rng: np.random.Generator, bound: float, shape) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv2d(Module):
    """Same-padded square convolution. ``zero_init`` zeroes weight and bias."""

    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 dilation: int = 1, bias: bool = True, zero_init: bool = False) -> None:
        if kernel % 2 != 1:
            raise ValueError("only odd kernels keep the spatial size")
        self.cin, self.cout, self.kernel, self.dilation = cin, cout, kernel, dilation
        self.pad = dilation * (kernel - 1) // 2
        shape = (cout, cin, kernel, kernel)
        bound = 1.0 / np.sqrt(cin * kernel * kernel)
        if zero_init:
            self.weight = Tensor(np.zeros(shape), requires_grad=True)
        else:
            self.weight = _uniform(rng, bound, shape)
        if bias:
            self.bias = (Tensor(np.zeros(cout), requires_grad=True) if zero_init
                         else _uniform(rng, bound, (cout,)))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=1, pad=self.pad,
                        dilation=self.dilation)

    def macs(self, batch: int, h: int, w: int) -> int:
        return batch * h * w * self.cout * self.cin * self.kernel * self.kernel


class Linear(Module):
    """Row-vector affine map ``x @ W + b``."""

    def __init__(self, din: int, dout: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False) -> None:
        self.din, self.dout = din, dout
        bound = 1.0 / np.sqrt(din)
        if zero_init:
            self.weight = Tensor(np.zeros((din, dout)), requires_grad=True)
        else:
            self.weight = _uniform(rng, bound, (din, dout))
        if bias:
            self.bias = (Tensor(np.zeros(dout), requires_grad=True) if zero_init
                         else _uniform(rng, bound, (dout,)))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)

    def macs(self, rows: int) -> int:
        return rows * self.din * self.dout


def per_view(fn, x: Tensor) -> Tensor:
    """Apply an image op to every SAI of a [U, V, C, H, W] field."""
    u, v = x.shape[:2]
    flat = T.reshape(x, (u * v,) + x.shape[2:])
    out = fn(flat)
    return T.reshape(out, (u, v) + out.shape[1:])
