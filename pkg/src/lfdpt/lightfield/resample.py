"""Separable bicubic resampling (Keys kernel, a = -0.5, half-pixel centers)."""

from functools import lru_cache

import numpy as np

from ..errors import ConfigurationError

KEYS_A = -0.5


def keys_kernel(x: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    far = ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


@lru_cache(maxsize=64)
def _matrix(n_in: int, n_out: int) -> np.ndarray:
    scale = n_out / n_in
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    base = np.floor(centers).astype(int)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for tap in range(-1, 3):
        idx = base + tap
        wts = keys_kernel(centers - idx)
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), wts)
    m.setflags(write=False)
    return m


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear map taking a length-``n_in`` signal to ``n_out`` samples."""
    return _matrix(int(n_in), int(n_out))


def _target(n: int, factor: float) -> int:
    t = n * factor
    if factor <= 0 or abs(t - round(t)) > 1e-9 or round(t) < 1:
        raise ConfigurationError(f"factor {factor} does not give an integral extent from {n}")
    return int(round(t))


def bicubic_resize(img: np.ndarray, factor: float) -> np.ndarray:
    """Resize the last two axes of ``img`` by ``factor`` (no antialiasing)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    ho, wo = _target(h, factor), _target(w, factor)
    if (ho, wo) == (h, w):
        return img.copy()
    return resize_matrix(h, ho) @ img @ resize_matrix(w, wo).T
