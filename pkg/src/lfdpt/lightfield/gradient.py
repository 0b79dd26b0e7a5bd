"""Spatial gradient-magnitude maps of each sub-aperture image."""

import numpy as np

from ..errors import DimensionError

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def _sobel(padded: np.ndarray, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    # separable form: central difference first, so flat regions give exact zeros
    dx = padded[..., :, 2:] - padded[..., :, :-2]
    dy = padded[..., 2:, :] - padded[..., :-2, :]
    gx = dx[..., 0:h, :] + 2.0 * dx[..., 1:h + 1, :] + dx[..., 2:h + 2, :]
    gy = dy[..., :, 0:w] + 2.0 * dy[..., :, 1:w + 1] + dy[..., :, 2:w + 2]
    return gx, gy


def gradient_field(lf: np.ndarray) -> np.ndarray:
    """Sobel magnitude per SAI, divided by 8, with replicate padding.

    The 1/8 factor makes a ramp of slope ``s`` map to ``|s|``.
    """
    lf = np.asarray(lf, dtype=np.float64)
    if lf.ndim != 5 or lf.shape[2] != 1:
        raise DimensionError(f"expected a [U, V, 1, H, W] field, got {lf.shape}")
    h, w = lf.shape[-2:]
    pad = [(0, 0)] * 3 + [(1, 1), (1, 1)]
    padded = np.pad(lf, pad, mode="edge")
    gx, gy = _sobel(padded, h, w)
    return np.sqrt(gx * gx + gy * gy) / 8.0
