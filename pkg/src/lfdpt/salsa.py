"""Spatial-angular locally-enhanced self-attention over one angular sequence.

A sequence is a [A, C, H, W] stack of feature maps (the views along one row
or column of the light field). Query/key/value maps come from 1x1
convolutions, overlapping Hp x Wp patches of all A views become the tokens,
and attention therefore mixes information across space and views at once.
The attended tokens are folded back, projected, and added to the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .nn import Conv2d, Linear, Module
from .tensor import Tensor

TOKENIZERS = ("conv", "linear")


@dataclass(frozen=True)
class SalsaConfig:
    patch: tuple[int, int] = (4, 4)
    stride: tuple[int, int] = (2, 2)
    # True divides scores by sqrt(d); False is softmax(Q K^T) V as written.
    scaled: bool = True
    # "linear" projects flattened raw patches (ViT-style) instead of 1x1 convs.
    tokenizer: str = "conv"
    qkv_bias: bool = True

    def __post_init__(self):
        if self.tokenizer not in TOKENIZERS:
            raise ConfigurationError(f"unknown tokenizer {self.tokenizer!r}")

    def token_grid(self, h: int, w: int) -> tuple[int, int]:
        ph, pw = self.patch
        sh, sw = self.stride
        if ph > h or pw > w or (h - ph) % sh or (w - pw) % sw:
            raise ConfigurationError(
                f"patch {self.patch} / stride {self.stride} does not tile {h}x{w}")
        return (h - ph) // sh + 1, (w - pw) // sw + 1


def attend(q: Tensor, k: Tensor, v: Tensor, scaled: bool = True) -> Tensor:
    """softmax(Q K^T * s) V over token rows; s = 1/sqrt(d) when ``scaled``."""
    if q.ndim != 2 or q.shape[1] != k.shape[1] or k.shape != v.shape:
        raise DimensionError(f"attend: incompatible Q {q.shape}, K {k.shape}, V {v.shape}")
    scores = T.matmul(q, T.transpose(k))
    if scaled:
        scores = T.scale(scores, 1.0 / np.sqrt(q.shape[1]))
    return T.matmul(T.softmax_rows(scores), v)


class SalsaLayer(Module):
    """One SA-LSA layer. The output projection starts at zero, so a fresh
    layer returns its residual input unchanged."""

    def __init__(self, channels: int, config: SalsaConfig, rng: np.random.Generator) -> None:
        self.channels = channels
        self.config = config
        if config.tokenizer == "conv":
            self.f_q = Conv2d(channels, channels, 1, rng, bias=config.qkv_bias)
            self.f_k = Conv2d(channels, channels, 1, rng, bias=config.qkv_bias)
            self.f_v = Conv2d(channels, channels, 1, rng, bias=config.qkv_bias)
            self.f_p = Conv2d(channels, channels, 1, rng, zero_init=True)
        else:
            d = channels * config.patch[0] * config.patch[1]
            self.f_q = Linear(d, d, rng, bias=config.qkv_bias)
            self.f_k = Linear(d, d, rng, bias=config.qkv_bias)
            self.f_v = Linear(d, d, rng, bias=config.qkv_bias)
            self.f_p = Linear(d, d, rng, zero_init=True)

    def _check(self, f: Tensor) -> None:
        if f.ndim != 4 or f.shape[1] != self.channels:
            raise DimensionError(
                f"expected a [A, {self.channels}, H, W] sequence, got {f.shape}")
        self.config.token_grid(*f.shape[2:])

    def tokenize(self, f: Tensor, proj: Module) -> Tensor:
        """Project then cut patches from every view: [A, C, H, W] -> [n, d]."""
        self._check(f)
        cfg = self.config
        if cfg.tokenizer == "conv":
            return T.unfold(proj(f), cfg.patch, cfg.stride)
        return proj(T.unfold(f, cfg.patch, cfg.stride))

    def detokenize(self, x: Tensor, residual: Tensor) -> Tensor:
        cfg = self.config
        if cfg.tokenizer == "conv":
            folded = self.f_p(T.fold(x, residual.shape, cfg.patch, cfg.stride))
        else:
            folded = T.fold(self.f_p(x), residual.shape, cfg.patch, cfg.stride)
        return T.add(folded, residual)

    def forward(self, f: Tensor) -> Tensor:
        return self.cross(f, f)

    def cross(self, u: Tensor, v: Tensor) -> Tensor:
        """Queries from ``u``, keys and values from ``v``, residual on ``u``."""
        if u.shape != v.shape:
            raise DimensionError(f"cross attention needs equal shapes, got {u.shape}, {v.shape}")
        self._check(u)
        cfg = self.config
        if cfg.tokenizer == "linear":
            tu = T.unfold(u, cfg.patch, cfg.stride)
            tv = tu if v is u else T.unfold(v, cfg.patch, cfg.stride)
            q, k, val = self.f_q(tu), self.f_k(tv), self.f_v(tv)
        else:
            q = self.tokenize(u, self.f_q)
            k = self.tokenize(v, self.f_k)
            val = self.tokenize(v, self.f_v)
        return self.detokenize(attend(q, k, val, cfg.scaled), u)

    def macs(self, a: int, h: int, w: int) -> int:
        nh, nw = self.config.token_grid(h, w)
        n = a * nh * nw
        c = self.channels
        d = c * self.config.patch[0] * self.config.patch[1]
        if self.config.tokenizer == "conv":
            proj = 4 * a * h * w * c * c
        else:
            proj = 4 * n * d * d
        return proj + 2 * n * n * d
