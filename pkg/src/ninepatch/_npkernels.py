"""Pure-numpy kernel lane.

Mirror of the compiled lane in ``_cykernels.pyx``: every function here keeps
the same floating-point operation order as its Cython twin, so the two lanes
produce bit-identical outputs.  Keep the implementations in sync.
"""

from __future__ import annotations

import numpy as np

# tan(22.5 deg) and tan(67.5 deg); shared literals with the compiled lane.
_TAN225 = 0.4142135623730951
_TAN675 = 2.414213562373095


def convolve_padded(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate a pre-padded image with *kernel*, valid region only.

    ``padded`` has shape (h + kh - 1, w + kw - 1); the result has shape
    (h, w).  Accumulation runs in (ky, kx) order to match the compiled lane.
    """
    kh, kw = kernel.shape
    h = padded.shape[0] - kh + 1
    w = padded.shape[1] - kw + 1
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            out += kernel[ky, kx] * padded[ky:ky + h, kx:kx + w]
    return out


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer base index and fractional offset for corner-aligned sampling."""
    if n_in == 1 or n_out == 1:
        base = np.zeros(n_out, dtype=np.int64)
        frac = np.zeros(n_out, dtype=np.float64)
        return base, frac
    scale = (n_in - 1.0) / (n_out - 1.0)
    src = np.arange(n_out, dtype=np.float64) * scale
    base = np.minimum(src.astype(np.int64), n_in - 2)
    frac = src - base
    return base, frac


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D float64 image."""
    y0, fy = _axis_coords(img.shape[0], out_h)
    x0, fx = _axis_coords(img.shape[1], out_w)
    y1 = np.minimum(y0 + 1, img.shape[0] - 1)
    x1 = np.minimum(x0 + 1, img.shape[1] - 1)

    p00 = img[np.ix_(y0, x0)]
    p01 = img[np.ix_(y0, x1)]
    p10 = img[np.ix_(y1, x0)]
    p11 = img[np.ix_(y1, x1)]
    fy = fy[:, None]
    fx = fx[None, :]
    top = (1.0 - fx) * p00 + fx * p01
    bot = (1.0 - fx) * p10 + fx * p11
    return (1.0 - fy) * top + fy * bot


def nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep local maxima of *mag* along the quantized gradient direction.

    Out-of-image neighbors read as 0.  A two-pixel plateau is thinned by the
    asymmetric rule keep iff mag >= forward neighbor and mag > backward
    neighbor.
    """
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = mag

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]

    ady = np.abs(gy)
    adx = np.abs(gx)
    sector0 = ady <= adx * _TAN225
    sector2 = ~sector0 & (ady >= adx * _TAN675)
    diag = ~sector0 & ~sector2
    sector1 = diag & (gx * gy >= 0.0)
    sector3 = diag & ~sector1

    fwd = np.select(
        [sector0, sector1, sector2, sector3],
        [shifted(0, 1), shifted(1, 1), shifted(1, 0), shifted(1, -1)],
    )
    bwd = np.select(
        [sector0, sector1, sector2, sector3],
        [shifted(0, -1), shifted(-1, -1), shifted(-1, 0), shifted(-1, 1)],
    )
    keep = (mag >= fwd) & (mag > bwd)
    return np.where(keep, mag, 0.0)


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Strong pixels plus weak pixels 8-connected to them through weak chains."""
    h, w = strong.shape
    cur = strong.copy()
    while True:
        padded = np.zeros((h + 2, w + 2), dtype=bool)
        padded[1:-1, 1:-1] = cur
        dilated = np.zeros((h, w), dtype=bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                dilated |= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        grown = cur | (weak & dilated)
        if np.array_equal(grown, cur):
            return cur
        cur = grown
