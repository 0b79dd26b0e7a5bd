"""PSNR/SSIM for single views and light fields.

Light-field scores are plain means over every view of every scene.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def psnr(ref: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    ref, test = np.asarray(ref, dtype=np.float64), np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise DimensionError(f"psnr: shapes {ref.shape} and {test.shape} differ")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    rows = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(rows, n, axis=1) @ g


def ssim(ref: np.ndarray, test: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM over the valid (unpadded) region of an 11x11 Gaussian window."""
    x, y = np.asarray(ref, dtype=np.float64), np.asarray(test, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise DimensionError(f"ssim needs two equal 2-d images, got {x.shape} and {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ConfigurationError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    mxy = mx * my
    vx = _filter_valid(x * x, g) - mx * mx
    vy = _filter_valid(y * y, g) - my * my
    cov = _filter_valid(x * y, g) - mxy
    num = (2.0 * mxy + c1) * (2.0 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-view scores with shape (T, U, V) and their means."""

    psnr: np.ndarray
    ssim: np.ndarray

    @property
    def n_views(self) -> int:
        return int(self.psnr.size)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    def to_tsv(self) -> str:
        lines = ["scene\tu\tv\tpsnr\tssim"]
        for t, u, v in np.ndindex(*self.psnr.shape):
            lines.append(f"{t}\t{u}\t{v}\t{self.psnr[t, u, v]:.6f}\t{self.ssim[t, u, v]:.6f}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        return (f"mean_psnr={self.mean_psnr:.6f}\nmean_ssim={self.mean_ssim:.6f}\n"
                f"n_views={self.n_views}\n")


def _view_scores(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} and truth {truth.shape} differ")
    if pred.ndim != 5 or pred.shape[2] != 1:
        raise DimensionError(f"expected single-channel [U, V, 1, H, W] fields, got {pred.shape}")
    u, v = pred.shape[:2]
    p, s = np.empty((u, v)), np.empty((u, v))
    for i in range(u):
        for j in range(v):
            p[i, j] = psnr(truth[i, j, 0], pred[i, j, 0])
            s[i, j] = ssim(truth[i, j, 0], pred[i, j, 0])
    return p, s


def evaluate(pred: np.ndarray, truth: np.ndarray) -> MetricReport:
    p, s = _view_scores(np.asarray(pred), np.asarray(truth))
    return MetricReport(p[None], s[None])


def evaluate_many(preds: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> MetricReport:
    """Scores over T scenes, averaged across all T x U x V views."""
    if len(preds) != len(truths) or not preds:
        raise DimensionError("need the same positive number of predictions and truths")
    scores = [_view_scores(np.asarray(p), np.asarray(t)) for p, t in zip(preds, truths)]
    shapes = {sc[0].shape for sc in scores}
    if len(shapes) != 1:
        raise DimensionError(f"scenes have different angular grids: {shapes}")
    return MetricReport(np.stack([sc[0] for sc in scores]), np.stack([sc[1] for sc in scores]))
