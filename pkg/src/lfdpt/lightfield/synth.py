"""Procedural light fields with known disparity.

Each scene is a band-limited texture (a sum of random-phase cosines) seen
from an A x A grid of views; view (u, v) samples the texture at
``(h + (u - u0) * d, w + (v - v0) * d)``, so sub-pixel shifts are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .resample import bicubic_resize


@dataclass(frozen=True)
class SyntheticScene:
    disparity: float = 1.0
    seed: int = 0
    n_waves: int = 12
    min_freq: float = 0.02
    max_freq: float = 0.45  # cycles per HR pixel; below Nyquist
    amplitude: float = 0.45


def _wave_params(scene: SyntheticScene, channels: int):
    rng = np.random.default_rng(scene.seed)
    params = []
    for _ in range(channels):
        radius = rng.uniform(scene.min_freq, scene.max_freq, scene.n_waves)
        angle = rng.uniform(0.0, np.pi, scene.n_waves)
        phase = rng.uniform(0.0, 2.0 * np.pi, scene.n_waves)
        amp = rng.uniform(0.2, 1.0, scene.n_waves)
        amp *= scene.amplitude / amp.sum()
        params.append((radius * np.sin(angle), radius * np.cos(angle), phase, amp))
    return params


def _texture(params, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    fy, fx, phase, amp = params
    out = np.full(np.broadcast_shapes(y.shape, x.shape), 0.5)
    for k in range(len(amp)):
        out += amp[k] * np.cos(2.0 * np.pi * (fy[k] * y + fx[k] * x) + phase[k])
    return out


def render_scene(scene: SyntheticScene, a: int, channels: int, h: int, w: int) -> np.ndarray:
    """HR field of shape [A, A, C, H, W] with values in [0, 1]."""
    if a < 1 or channels < 1 or h < 1 or w < 1:
        raise ConfigurationError("extents must be positive")
    params = _wave_params(scene, channels)
    center = (a - 1) / 2.0
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    out = np.empty((a, a, channels, h, w))
    for u in range(a):
        for v in range(a):
            y = rows + (u - center) * scene.disparity
            x = cols + (v - center) * scene.disparity
            for c in range(channels):
                out[u, v, c] = _texture(params[c], y, x)
    return np.clip(out, 0.0, 1.0)


def degrade(hr: np.ndarray, alpha: int) -> np.ndarray:
    """Per-view bicubic decimation by ``alpha``."""
    return bicubic_resize(hr, 1.0 / alpha)


def generate_scene(scene: SyntheticScene, a: int, channels: int, h: int, w: int,
                   alpha: int = 2) -> tuple[np.ndarray, np.ndarray]:
    if alpha not in (2, 4):
        raise ConfigurationError(f"alpha must be 2 or 4, got {alpha}")
    if h % alpha or w % alpha:
        raise ConfigurationError(f"spatial extents {(h, w)} not divisible by {alpha}")
    hr = render_scene(scene, a, channels, h, w)
    return hr, degrade(hr, alpha)


def view_shift(ref: np.ndarray, moved: np.ndarray, max_shift: int, axis: int) -> int:
    """Integer ``s`` minimising the mismatch of ``moved[i] ~ ref[i + s]`` along ``axis``.

    Both inputs are 2-d images; only the overlapping region is compared.
    """
    best, best_err = 0, np.inf
    n = ref.shape[axis]
    for s in range(-max_shift, max_shift + 1):
        lo, hi = max(0, -s), min(n, n - s)
        if hi - lo < 1:
            continue
        r = np.take(ref, np.arange(lo + s, hi + s), axis=axis)
        m = np.take(moved, np.arange(lo, hi), axis=axis)
        err = np.mean((r - m) ** 2)
        if err < best_err - 1e-15:
            best, best_err = s, err
    return best


def epi_offsets(lf: np.ndarray, max_shift: int = 4) -> tuple[list[int], list[int]]:
    """Pixel offsets between angular neighbours along v (on w) and along u (on h).

    In a field of constant disparity ``d`` every entry equals ``d``: the
    lines traced in each epipolar-plane slice all share that slope.
    """
    a_u, a_v = lf.shape[:2]
    horiz, vert = [], []
    for u in range(a_u):
        for v in range(a_v - 1):
            horiz.append(view_shift(lf[u, v, 0], lf[u, v + 1, 0], max_shift, axis=1))
    for u in range(a_u - 1):
        for v in range(a_v):
            vert.append(view_shift(lf[u, v, 0], lf[u + 1, v, 0], max_shift, axis=0))
    return horiz, vert
