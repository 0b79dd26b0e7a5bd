"""BT.601 full-range RGB <-> YCbCr on the channel axis of a light field."""

import numpy as np

from ..errors import DimensionError

KR, KB = 0.299, 0.114
KG = 1.0 - KR - KB
# rows derived from the luma weights rather than the usual 6-digit roundings
_RGB_TO_YCBCR = np.array([
    [KR, KG, KB],
    [-KR / (2 * (1 - KB)), -KG / (2 * (1 - KB)), 0.5],
    [0.5, -KG / (2 * (1 - KR)), -KB / (2 * (1 - KR))],
])
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_OFFSET = np.array([0.0, 0.5, 0.5])


def _check(lf: np.ndarray) -> None:
    if lf.ndim != 5 or lf.shape[2] != 3:
        raise DimensionError(f"expected a [U, V, 3, H, W] field, got {lf.shape}")


def rgb_to_ycbcr(lf: np.ndarray) -> np.ndarray:
    _check(lf)
    out = np.einsum("kc,uvchw->uvkhw", _RGB_TO_YCBCR, lf)
    return out + _OFFSET[None, None, :, None, None]


def ycbcr_to_rgb(lf: np.ndarray) -> np.ndarray:
    _check(lf)
    centered = lf - _OFFSET[None, None, :, None, None]
    return np.einsum("kc,uvchw->uvkhw", _YCBCR_TO_RGB, centered)
