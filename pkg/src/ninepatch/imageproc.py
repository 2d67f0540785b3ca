"""Pixel-level primitives.

Images are 2-D float64 arrays of luminance in [0, 1], row-major (y, x).
All arithmetic is 64-bit; every function is pure and safe to call from any
number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError

#: BT.601 luma weights for RGB -> grayscale.
_LUMA = np.array([0.299, 0.587, 0.114])

_SOBEL_GX = np.array([[-1.0, 0.0, 1.0],
                      [-2.0, 0.0, 2.0],
                      [-1.0, 0.0, 1.0]])
_SOBEL_GY = np.array([[-1.0, -2.0, -1.0],
                      [0.0, 0.0, 0.0],
                      [1.0, 2.0, 1.0]])

#: Inputs with population std below this are treated as flat (see standardize).
FLAT_STD = 1e-8


@dataclass(frozen=True)
class CropBox:
    """Rectangular window: top-left corner (top, left) plus height and width."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.top < 0 or self.left < 0 or self.height < 1 or self.width < 1:
            raise InvalidInputError(f"degenerate crop box {self}")

    def compose(self, inner: "CropBox") -> "CropBox":
        """Box selecting the same pixels as cropping by self, then by inner."""
        if inner.top + inner.height > self.height or inner.left + inner.width > self.width:
            raise InvalidInputError(f"{inner} does not fit inside {self}")
        return CropBox(self.top + inner.top, self.left + inner.left,
                       inner.height, inner.width)


def _check_image(img: np.ndarray, min_side: int = 1) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < min_side or img.shape[1] < min_side:
        raise InvalidInputError(
            f"expected a 2-D image with sides >= {min_side}, got shape {img.shape}")
    return img


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luminance of an (h, w, 3) image with channels in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise InvalidInputError(f"expected a non-empty (h, w, 3) image, got {rgb.shape}")
    return np.clip(rgb @ _LUMA, 0.0, 1.0)


def crop(img: np.ndarray, box: CropBox) -> np.ndarray:
    """Window of img at box; values are copied bit-identically, no clamping."""
    img = _check_image(img)
    if box.top + box.height > img.shape[0] or box.left + box.width > img.shape[1]:
        raise InvalidInputError(f"{box} exceeds image shape {img.shape}")
    return img[box.top:box.top + box.height, box.left:box.left + box.width].copy()


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resize to out_h x out_w.

    Output corners sample input corners exactly; a target side of 1 samples
    index 0 of that axis.
    """
    img = _check_image(img)
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"target size {out_h}x{out_w} must be >= 1")
    return kernels.bilinear_resize(img, out_h, out_w)


def convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size filtering with an odd kernel; border by edge replication.

    The kernel is applied unflipped (cross-correlation); all kernels used in
    the pipeline are symmetric or consumed via magnitudes.
    """
    img = _check_image(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise InvalidInputError(f"kernel must be 2-D with odd sides, got {kernel.shape}")
    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode="edge")
    return kernels.convolve_padded(padded, kernel)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """size x size Gaussian on the centered integer lattice, normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise InvalidInputError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    k = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return k / k.sum()


def _sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return convolve(img, _SOBEL_GX), convolve(img, _SOBEL_GY)


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude, rescaled so the maximum is 1.

    The rescale makes a fixed threshold (e.g. 0.2) mean the same thing on
    every image.  A constant image maps to all zeros.
    """
    img = _check_image(img, min_side=3)
    gx, gy = _sobel_gradients(img)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0.0:
        mag = mag / peak
    return mag


def canny(img: np.ndarray, low: float = 0.1, high: float = 0.2) -> np.ndarray:
    """Canny edge mask: Sobel gradients, non-maximum suppression along the
    quantized gradient direction, double threshold on the max-1-rescaled
    magnitude, and hysteresis by 8-connectivity.

    Thresholds act on [0, 1]: strong means magnitude >= high, weak means
    low <= magnitude < high.
    """
    img = _check_image(img, min_side=3)
    if not (0.0 <= low <= high <= 1.0):
        raise InvalidInputError(f"need 0 <= low <= high <= 1, got {low}, {high}")
    gx, gy = _sobel_gradients(img)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak == 0.0:
        return np.zeros(img.shape, dtype=bool)
    mag = mag / peak
    thin = kernels.nonmax_suppress(mag, gx, gy)
    strong = thin >= high
    weak = (thin >= low) & (thin < high)
    return kernels.hysteresis(strong, weak)


def threshold_mask(img: np.ndarray, t: float) -> np.ndarray:
    """Boolean mask of pixels strictly above t."""
    img = _check_image(img)
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"threshold must be in [0, 1], got {t}")
    return img > t


def standardize(vec: np.ndarray) -> np.ndarray:
    """Shift/scale to mean 0 and population std 1.

    Flat inputs (std < FLAT_STD) come back as all zeros so degenerate patches
    flow through training harmlessly.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size == 0:
        raise InvalidInputError("cannot standardize an empty vector")
    centered = vec - vec.mean()
    std = np.sqrt(np.mean(centered * centered))
    if std < FLAT_STD:
        return np.zeros_like(vec)
    return centered / std
