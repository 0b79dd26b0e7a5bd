"""Training-patch extraction and joint spatial/angular augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


def patch_origins(h: int, w: int, patch: int, stride: int) -> list[tuple[int, int]]:
    if patch > h or patch > w:
        raise ConfigurationError(f"patch {patch} exceeds image {(h, w)}")
    if stride < 1:
        raise ConfigurationError("stride must be positive")
    return [(y, x) for y in range(0, h - patch + 1, stride)
            for x in range(0, w - patch + 1, stride)]


def crop_patches(hr: np.ndarray, lr: np.ndarray, patch: int = 64, stride: int | None = None):
    """Aligned (HR, LR) crops taken at the same window in every view.

    ``lr`` is the already-degraded full field; crops are positionally
    aligned with their HR counterpart, not re-degraded.
    """
    h, w = hr.shape[-2:]
    alpha = h // lr.shape[-2]
    if alpha * lr.shape[-2] != h or alpha * lr.shape[-1] != w:
        raise ConfigurationError(f"HR {hr.shape} and LR {lr.shape} are not an integer pair")
    stride = patch if stride is None else stride
    if patch % alpha or stride % alpha:
        raise ConfigurationError(f"patch {patch} and stride {stride} must be multiples of {alpha}")
    lp = patch // alpha
    pairs = []
    for y, x in patch_origins(h, w, patch, stride):
        ly, lx = y // alpha, x // alpha
        pairs.append((hr[..., y:y + patch, x:x + patch].copy(),
                       lr[..., ly:ly + lp, lx:lx + lp].copy()))
    return pairs


@dataclass(frozen=True)
class Transform:
    """Element of the dihedral group acting on a [U, V, C, H, W] field.

    Applied as horizontal flip, then vertical flip, then a 90 degree
    rotation. Each acts on the angular grid and the spatial axes together.
    """

    hflip: bool = False
    vflip: bool = False
    rot90: bool = False

    def apply(self, lf: np.ndarray) -> np.ndarray:
        out = lf
        if self.hflip:
            out = out[:, ::-1, :, :, ::-1]
        if self.vflip:
            out = out[::-1, :, :, ::-1, :]
        if self.rot90:
            out = np.rot90(np.rot90(out, 1, axes=(3, 4)), 1, axes=(0, 1))
        return np.ascontiguousarray(out)

    def invert(self, lf: np.ndarray) -> np.ndarray:
        out = lf
        if self.rot90:
            out = np.rot90(np.rot90(out, -1, axes=(3, 4)), -1, axes=(0, 1))
        if self.vflip:
            out = out[::-1, :, :, ::-1, :]
        if self.hflip:
            out = out[:, ::-1, :, :, ::-1]
        return np.ascontiguousarray(out)


ALL_TRANSFORMS = tuple(Transform(h, v, r) for h in (False, True)
                       for v in (False, True) for r in (False, True))


def random_transform(rng: np.random.Generator) -> Transform:
    return Transform(bool(rng.integers(2)), bool(rng.integers(2)), bool(rng.integers(2)))


def augment(pair: tuple[np.ndarray, np.ndarray], seed) -> tuple[np.ndarray, np.ndarray]:
    """Apply one random group element, identically, to both fields of a pair."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t = random_transform(rng)
    hr, lr = pair
    if hr.shape[0] != hr.shape[1]:
        raise ConfigurationError("augmentation needs a square angular grid")
    return t.apply(hr), t.apply(lr)
