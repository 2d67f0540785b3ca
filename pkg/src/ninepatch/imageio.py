"""Image file decoding and the standard preprocessing chain.

Decoding (PNG/JPEG via Pillow) lives here at the pipeline boundary; all
other modules consume in-memory float arrays only.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from . import imageproc
from .errors import DataError
from .imageproc import CropBox


def load_image(path) -> np.ndarray:
    """Decode an 8-bit image file to float64 in [0, 1].

    Returns (h, w) for grayscale sources and (h, w, 3) for color.
    """
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "I;16", "I"):
                arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return arr


def preprocess(img: np.ndarray, crop: CropBox | None = None,
               side: int = 60) -> np.ndarray:
    """Grayscale, optional fixed-box crop, resize to side x side."""
    gray = imageproc.to_grayscale(img) if img.ndim == 3 else np.asarray(img, dtype=np.float64)
    if crop is not None:
        gray = imageproc.crop(gray, crop)
    return imageproc.resize_bilinear(gray, side, side)
