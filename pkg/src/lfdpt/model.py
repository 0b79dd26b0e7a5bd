"""The dual-branch light-field super-resolution network.

Data flow for an LR field L of shape [A, A, 1, H, W]:

    G = gradient_field(L)
    F_c, F_g = content/gradient extractors (per view)
    T_c = [T_1..T_K] from the content transformer, likewise T_g
    H_c = [F_c, T_1..T_K] on channels, likewise H_g
    Z = cross-attention fusion (queries from H_c, keys/values from H_g)
    out = reconstructor(Z) + bicubic(L)

``DptConfig.ablation`` rewires this graph for the ablation variants.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .lightfield.gradient import gradient_field
from .lightfield.resample import bicubic_resize
from .nn import Conv2d, Module, per_view
from .rng import stream
from .salsa import SalsaConfig, SalsaLayer
from .tensor import Tensor

ABLATIONS = ("full", "content_only", "sum_fusion", "image_fusion",
             "conv_branches", "vanilla_attention")
SLOPE = 0.1


def _lrelu(x: Tensor) -> Tensor:
    return T.leaky_relu(x, SLOPE)


@dataclass(frozen=True)
class DptConfig:
    a: int = 3
    channels: int = 16
    k: int = 2
    alpha: int = 2
    n_imdb: int = 2
    imdb_channels: int = 32
    ablation: str = "full"
    salsa: SalsaConfig = field(default_factory=SalsaConfig)

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"K must be at least 1, got {self.k}")
        if self.a < 1:
            raise ConfigurationError(f"A must be at least 1, got {self.a}")
        if self.alpha not in (2, 4):
            raise ConfigurationError(f"alpha must be 2 or 4, got {self.alpha}")
        if self.channels < 1 or self.n_imdb < 0:
            raise ConfigurationError("channels must be positive and n_imdb non-negative")
        if self.imdb_channels < 4 or self.imdb_channels % 4:
            raise ConfigurationError(
                f"imdb_channels must be a positive multiple of 4, got {self.imdb_channels}")
        if self.ablation not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")

    @property
    def effective_salsa(self) -> SalsaConfig:
        if self.ablation == "vanilla_attention":
            return dataclasses.replace(self.salsa, tokenizer="linear")
        return self.salsa

    def to_items(self) -> dict[str, str]:
        s = self.salsa
        return {
            "a": str(self.a), "channels": str(self.channels), "k": str(self.k),
            "alpha": str(self.alpha), "n_imdb": str(self.n_imdb),
            "imdb_channels": str(self.imdb_channels), "ablation": self.ablation,
            "salsa.patch": f"{s.patch[0]},{s.patch[1]}",
            "salsa.stride": f"{s.stride[0]},{s.stride[1]}",
            "salsa.scaled": str(s.scaled).lower(), "salsa.tokenizer": s.tokenizer,
            "salsa.qkv_bias": str(s.qkv_bias).lower(),
        }

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "DptConfig":
        def pair(text):
            a, b = (int(t) for t in text.split(","))
            return a, b

        def flag(text):
            if text.lower() not in ("true", "false"):
                raise ConfigurationError(f"expected true/false, got {text!r}")
            return text.lower() == "true"

        base, salsa = cls(), SalsaConfig()
        try:
            salsa = SalsaConfig(
                patch=pair(items.get("salsa.patch", "%d,%d" % salsa.patch)),
                stride=pair(items.get("salsa.stride", "%d,%d" % salsa.stride)),
                scaled=flag(items.get("salsa.scaled", str(salsa.scaled))),
                tokenizer=items.get("salsa.tokenizer", salsa.tokenizer),
                qkv_bias=flag(items.get("salsa.qkv_bias", str(salsa.qkv_bias))),
            )
            return cls(
                a=int(items.get("a", base.a)), channels=int(items.get("channels", base.channels)),
                k=int(items.get("k", base.k)), alpha=int(items.get("alpha", base.alpha)),
                n_imdb=int(items.get("n_imdb", base.n_imdb)),
                imdb_channels=int(items.get("imdb_channels", base.imdb_channels)),
                ablation=items.get("ablation", base.ablation), salsa=salsa,
            )
        except ValueError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"bad model configuration: {exc}") from exc


# -- convolutional pieces ----------------------------------------------------

class ResidualBlock(Module):
    def __init__(self, channels: int, rng, mid: int | None = None) -> None:
        mid = channels if mid is None else mid
        self.conv1 = Conv2d(channels, mid, 3, rng)
        self.conv2 = Conv2d(mid, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return T.add(x, self.conv2(_lrelu(self.conv1(x))))

    def convs(self):
        return [self.conv1, self.conv2]


class ResidualASPP(Module):
    """Parallel dilated 3x3 convolutions summed onto the input."""

    DILATIONS = (1, 2, 4)

    def __init__(self, channels: int, rng) -> None:
        self.branches = [Conv2d(channels, channels, 3, rng, dilation=d) for d in self.DILATIONS]

    def forward(self, x: Tensor) -> Tensor:
        acc = _lrelu(self.branches[0](x))
        for conv in self.branches[1:]:
            acc = T.add(acc, _lrelu(conv(x)))
        return T.add(x, acc)

    def convs(self):
        return list(self.branches)


class FeatureExtractor(Module):
    """Per-view CNN: entry conv, RB, RASPP, RB, RASPP, then a 3x3 alignment conv."""

    def __init__(self, channels: int, rng) -> None:
        self.entry = Conv2d(1, channels, 3, rng)
        self.rb1 = ResidualBlock(channels, rng)
        self.aspp1 = ResidualASPP(channels, rng)
        self.rb2 = ResidualBlock(channels, rng)
        self.aspp2 = ResidualASPP(channels, rng)
        self.align = Conv2d(channels, channels, 3, rng)

    def _images(self, x: Tensor) -> Tensor:
        x = _lrelu(self.entry(x))
        x = self.aspp1(self.rb1(x))
        x = self.aspp2(self.rb2(x))
        return self.align(x)

    def forward(self, field: Tensor) -> Tensor:
        if field.ndim != 5 or field.shape[2] != 1:
            raise DimensionError(f"extractor expects [A, A, 1, H, W], got {field.shape}")
        return per_view(self._images, field)

    def macs(self, views: int, h: int, w: int) -> int:
        convs = [self.entry, *self.rb1.convs(), *self.aspp1.convs(),
                 *self.rb2.convs(), *self.aspp2.convs(), self.align]
        return sum(c.macs(views, h, w) for c in convs)


class IMDB(Module):
    """Information multi-distillation block.

    Three 3x3 stages each keep a quarter of their output channels and pass
    the other three quarters on; a last 3x3 conv yields the fourth quarter.
    The quarters are concatenated, fused by a 1x1 conv and added to the input.
    """

    def __init__(self, channels: int, rng) -> None:
        self.dist = channels // 4
        rem = channels - self.dist
        self.c1 = Conv2d(channels, channels, 3, rng)
        self.c2 = Conv2d(rem, channels, 3, rng)
        self.c3 = Conv2d(rem, channels, 3, rng)
        self.c4 = Conv2d(rem, self.dist, 3, rng)
        self.fuse = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        d = self.dist
        o1 = _lrelu(self.c1(x))
        o2 = _lrelu(self.c2(o1[:, d:]))
        o3 = _lrelu(self.c3(o2[:, d:]))
        o4 = self.c4(o3[:, d:])
        kept = T.concat([o1[:, :d], o2[:, :d], o3[:, :d], o4], axis=1)
        return T.add(self.fuse(kept), x)

    def convs(self):
        return [self.c1, self.c2, self.c3, self.c4, self.fuse]


class Reconstructor(Module):
    """Per-view head: 1x1 entry, IMDB stack, 1x1 to alpha^2 groups, pixel
    shuffle, 1x1 to one channel. The last conv starts at zero."""

    def __init__(self, cin: int, width: int, n_blocks: int, alpha: int, rng) -> None:
        self.alpha = alpha
        self.entry = Conv2d(cin, width, 1, rng)
        self.blocks = [IMDB(width, rng) for _ in range(n_blocks)]
        self.up = Conv2d(width, width * alpha * alpha, 1, rng)
        self.final = Conv2d(width, 1, 1, rng, zero_init=True)

    def _images(self, z: Tensor) -> Tensor:
        x = self.entry(z)
        for block in self.blocks:
            x = block(x)
        x = _lrelu(T.pixel_shuffle(self.up(x), self.alpha))
        return self.final(x)

    def forward(self, z: Tensor) -> Tensor:
        return per_view(self._images, z)

    def macs(self, views: int, h: int, w: int) -> int:
        total = self.entry.macs(views, h, w) + self.up.macs(views, h, w)
        for block in self.blocks:
            total += sum(c.macs(views, h, w) for c in block.convs())
        return total + self.final.macs(views, self.alpha * h, self.alpha * w)


# -- sequence processing -----------------------------------------------------

def horizontal_stage(layer: SalsaLayer, x: Tensor, other: Tensor | None = None) -> Tensor:
    """Run ``layer`` on each row sequence x[i] independently and restack."""
    other = x if other is None else other
    return T.stack([layer.cross(x[i], other[i]) for i in range(x.shape[0])], axis=0)


def vertical_stage(layer: SalsaLayer, x: Tensor, other: Tensor | None = None) -> Tensor:
    """Run ``layer`` on each column sequence x[:, j] independently and restack."""
    other = x if other is None else other
    return T.stack([layer.cross(x[:, j], other[:, j]) for j in range(x.shape[1])], axis=1)


def per_sai_stage(layer: SalsaLayer, x: Tensor, other: Tensor) -> Tensor:
    """Run ``layer`` on every view alone (length-1 sequences)."""
    rows = []
    for i in range(x.shape[0]):
        views = [layer.cross(x[i, j:j + 1], other[i, j:j + 1]) for j in range(x.shape[1])]
        rows.append(T.concat(views, axis=0))
    return T.stack(rows, axis=0)


class SpatialAngularBlock(Module):
    """Horizontal SA-LSA layer followed by a vertical one (independent weights)."""

    def __init__(self, channels: int, config: SalsaConfig, rng) -> None:
        self.horizontal = SalsaLayer(channels, config, rng)
        self.vertical = SalsaLayer(channels, config, rng)

    def forward(self, x: Tensor) -> Tensor:
        return vertical_stage(self.vertical, horizontal_stage(self.horizontal, x))

    def cross(self, content: Tensor, detail: Tensor) -> Tensor:
        y = horizontal_stage(self.horizontal, content, detail)
        return vertical_stage(self.vertical, y, detail)

    def cross_per_sai(self, content: Tensor, detail: Tensor) -> Tensor:
        y = per_sai_stage(self.horizontal, content, detail)
        return per_sai_stage(self.vertical, y, detail)

    def macs(self, a: int, h: int, w: int, per_sai: bool = False) -> int:
        if per_sai:
            return a * a * (self.horizontal.macs(1, h, w) + self.vertical.macs(1, h, w))
        return a * (self.horizontal.macs(a, h, w) + self.vertical.macs(a, h, w))


class UnimodalTransformer(Module):
    def __init__(self, channels: int, k: int, config: SalsaConfig, rng) -> None:
        self.blocks = [SpatialAngularBlock(channels, config, rng) for _ in range(k)]

    def forward(self, f: Tensor) -> list[Tensor]:
        if f.ndim != 5 or f.shape[0] != f.shape[1]:
            raise DimensionError(f"expected a square [A, A, C, H, W] field, got {f.shape}")
        outs = []
        x = f
        for block in self.blocks:
            x = block(x)
            outs.append(x)
        return outs

    def macs(self, a: int, h: int, w: int) -> int:
        return sum(b.macs(a, h, w) for b in self.blocks)


def salsa_block_params(channels: int, config: SalsaConfig) -> int:
    per_proj = channels * channels + (channels if config.qkv_bias else 0)
    return 2 * (3 * per_proj + channels * channels + channels)


def matched_bottleneck(channels: int, target: int) -> int:
    """Bottleneck width of a 3x3/3x3 residual block whose size is closest to ``target``."""
    def size(m):
        return 18 * channels * m + m + channels
    return min(range(1, 4 * channels + 1), key=lambda m: (abs(size(m) - target), m))


class ConvBranch(Module):
    """Residual-block stand-in for a transformer, one block per attention block."""

    def __init__(self, channels: int, k: int, config: SalsaConfig, rng) -> None:
        mid = matched_bottleneck(channels, salsa_block_params(channels, config))
        self.blocks = [ResidualBlock(channels, rng, mid=mid) for _ in range(k)]

    def forward(self, f: Tensor) -> list[Tensor]:
        outs = []
        x = f
        for block in self.blocks:
            x = per_view(block, x)
            outs.append(x)
        return outs

    def macs(self, a: int, h: int, w: int) -> int:
        return sum(c.macs(a * a, h, w) for b in self.blocks for c in b.convs())


# -- the full network ------------------------------------------------------------

class DptModel(Module):
    def __init__(self, config: DptConfig | None = None, seed: int = 0) -> None:
        config = DptConfig() if config is None else config
        self.config = config
        self.seed = seed
        rng = stream(seed, "init")
        c, k, ab = config.channels, config.k, config.ablation
        salsa = config.effective_salsa
        branch_cls = ConvBranch if ab == "conv_branches" else UnimodalTransformer
        dual = ab != "content_only"

        self.content_extractor = FeatureExtractor(c, rng)
        self.content_branch = branch_cls(c, k, salsa, rng)
        self.gradient_extractor = FeatureExtractor(c, rng) if dual else None
        self.gradient_branch = branch_cls(c, k, salsa, rng) if dual else None
        fused = (k + 1) * c
        needs_fusion = ab not in ("content_only", "sum_fusion")
        self.fusion = SpatialAngularBlock(fused, salsa, rng) if needs_fusion else None
        self.reconstructor = Reconstructor(fused, config.imdb_channels, config.n_imdb,
                                           config.alpha, rng)

    def _validate(self, lr: np.ndarray) -> None:
        a = self.config.a
        if lr.ndim != 5 or lr.shape[:3] != (a, a, 1):
            raise DimensionError(f"expected an LR field of shape [{a}, {a}, 1, H, W], got {lr.shape}")

    def branch(self, which: str, lr: np.ndarray) -> tuple[Tensor, list[Tensor]]:
        """Extracted features F and transformer outputs T_1..T_K for one branch."""
        if which == "content":
            return self._run(self.content_extractor, self.content_branch, lr)
        if which == "gradient":
            if self.gradient_extractor is None:
                raise ConfigurationError("this variant has no gradient branch")
            return self._run(self.gradient_extractor, self.gradient_branch, gradient_field(lr))
        raise ConfigurationError(f"unknown branch {which!r}")

    @staticmethod
    def _run(extractor, transformer, field: np.ndarray):
        f = extractor(Tensor(field))
        return f, transformer(f)

    def fuse(self, h_cont: Tensor, h_grad: Tensor | None) -> Tensor:
        ab = self.config.ablation
        if ab == "content_only":
            return h_cont
        if h_grad is None or h_grad.shape != h_cont.shape:
            raise DimensionError("fusion inputs must have identical shapes")
        if ab == "sum_fusion":
            return T.add(h_cont, h_grad)
        if ab == "image_fusion":
            return self.fusion.cross_per_sai(h_cont, h_grad)
        return self.fusion.cross(h_cont, h_grad)

    def fusion_inputs(self, lr: np.ndarray) -> tuple[Tensor, Tensor | None]:
        lr = np.asarray(lr, dtype=np.float64)
        self._validate(lr)
        h_cont = build_fusion_inputs(*self.branch("content", lr))
        if self.gradient_extractor is None:
            return h_cont, None
        return h_cont, build_fusion_inputs(*self.branch("gradient", lr))

    def forward(self, lr) -> Tensor:
        """Super-resolve an LR field [A, A, 1, H, W] to [A, A, 1, alpha*H, alpha*W]."""
        lr = np.asarray(lr, dtype=np.float64)
        z = self.fuse(*self.fusion_inputs(lr))
        head = self.reconstructor(z)
        return T.add(head, Tensor(bicubic_resize(lr, self.config.alpha)))


def build_fusion_inputs(f: Tensor, ts: list[Tensor]) -> Tensor:
    """Channel concatenation [F, T_1, ..., T_K]."""
    if not ts:
        raise ConfigurationError("at least one transformer output is required")
    return T.concat([f, *ts], axis=2)


def count_params(model: Module) -> int:
    return model.num_parameters()


def estimate_flops(model: DptModel, a: int, h: int, w: int) -> int:
    """Multiply-accumulates of one forward pass on an [a, a, 1, h, w] input.

    Counts convolutions, linear projections and the two attention products;
    elementwise work, softmax and the bicubic skip are not counted.
    """
    views = a * a
    total = model.content_extractor.macs(views, h, w)
    total += model.content_branch.macs(a, h, w)
    if model.gradient_extractor is not None:
        total += model.gradient_extractor.macs(views, h, w)
        total += model.gradient_branch.macs(a, h, w)
    if model.fusion is not None:
        per_sai = model.config.ablation == "image_fusion"
        total += model.fusion.macs(a, h, w, per_sai=per_sai)
    return total + model.reconstructor.macs(views, h, w)
