"""Patch extraction: the nine-patch grid (generalized patch size / overlap),
edge-driven patches, horizontal rows, and the whole-image vector.

Every emitted feature vector is standardized (mean 0, population std 1, or
all zeros for flat windows).  Grid slots are 1-based row-major, matching the
left-to-right, top-to-bottom patch indexing used in reports.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from . import imageproc
from .errors import InvalidInputError

Slot = Union[int, tuple[int, int]]

#: Slot value used for the whole-image vector (grid slots start at 1).
WHOLE_IMAGE_SLOT = 0


@dataclass(frozen=True)
class GridSpec:
    """Sliding-grid geometry over a square image.

    The default (60 px image, 30x30 patches, overlap 0.5) yields the nine
    patches at offsets 0/15/30 per axis.
    """

    image_side: int = 60
    patch_h: int = 30
    patch_w: int = 30
    overlap: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise InvalidInputError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.patch_h < 1 or self.patch_w < 1:
            raise InvalidInputError("patch sides must be >= 1")
        if self.patch_h > self.image_side or self.patch_w > self.image_side:
            raise InvalidInputError(
                f"patch {self.patch_h}x{self.patch_w} exceeds image side {self.image_side}")

    def stride(self, patch_side: int) -> int:
        s = int(round(patch_side * (1.0 - self.overlap)))
        return max(s, 1)

    def offsets(self, patch_side: int) -> list[int]:
        """Top-left offsets along one axis: 0, stride, 2*stride, ... with the
        final window flush against the far edge."""
        last = self.image_side - patch_side
        offs = list(range(0, last + 1, self.stride(patch_side)))
        if offs[-1] != last:
            offs.append(last)
        return offs

    def n_patches(self) -> int:
        return len(self.offsets(self.patch_h)) * len(self.offsets(self.patch_w))


@dataclass
class Patch:
    """One standardized training/inference unit cut from an image."""

    features: np.ndarray
    image_id: str
    slot: Slot
    gender: str | None = None       # 'm' or 'f'
    age_group: int | None = None    # 1..8
    fold: int | None = None

    def with_labels(self, gender=None, age_group=None, fold=None) -> "Patch":
        return replace(self, gender=gender, age_group=age_group, fold=fold)


def _standardized_patch(window: np.ndarray, image_id: str, slot: Slot) -> Patch:
    return Patch(imageproc.standardize(window.ravel()), image_id, slot)


def grid_patches(img: np.ndarray, spec: GridSpec, image_id: str = "") -> list[Patch]:
    """Row-major grid of standardized patches; slots run 1..n."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (spec.image_side, spec.image_side):
        raise InvalidInputError(
            f"image shape {img.shape} does not match grid spec side {spec.image_side}")
    patches = []
    slot = 1
    for top in spec.offsets(spec.patch_h):
        for left in spec.offsets(spec.patch_w):
            window = img[top:top + spec.patch_h, left:left + spec.patch_w]
            patches.append(_standardized_patch(window, image_id, slot))
            slot += 1
    return patches


def edge_patches(img: np.ndarray, mask: np.ndarray, patch_side: int = 13,
                 image_id: str = "") -> list[Patch]:
    """One patch centered on each set mask pixel whose window fits inside the
    image; border centers are skipped rather than padded.  Slots carry the
    (row, col) center coordinate; scan order is row-major.
    """
    img = np.asarray(img, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if patch_side < 1 or patch_side % 2 == 0:
        raise InvalidInputError(f"patch side must be odd, got {patch_side}")
    if mask.shape != img.shape:
        raise InvalidInputError(
            f"mask shape {mask.shape} does not match image shape {img.shape}")
    half = patch_side // 2
    h, w = img.shape
    patches = []
    for cy, cx in np.argwhere(mask):
        if cy < half or cy >= h - half or cx < half or cx >= w - half:
            continue
        window = img[cy - half:cy + half + 1, cx - half:cx + half + 1]
        patches.append(_standardized_patch(window, image_id, (int(cy), int(cx))))
    return patches


def interior_mask_count(mask: np.ndarray, patch_side: int) -> int:
    """Number of set mask pixels whose patch window fits inside the image."""
    half = patch_side // 2
    if mask.shape[0] <= 2 * half or mask.shape[1] <= 2 * half:
        return 0
    interior = mask[half:mask.shape[0] - half, half:mask.shape[1] - half]
    return int(np.count_nonzero(interior))


def edge_mask(img: np.ndarray, detector: str = "sobel", blur_size: int = 9,
              blur_sigma: float = 2.0, threshold: float = 0.2,
              canny_low: float = 0.1, canny_high: float = 0.2) -> np.ndarray:
    """Binary mask of strong edges: detect, low-pass with a Gaussian, threshold.

    With the defaults (9x9 Gaussian, sigma 2, threshold 0.2) this is the
    mask that drives edge-patch extraction.
    """
    if detector == "sobel":
        edges = imageproc.sobel_magnitude(img)
    elif detector == "canny":
        edges = imageproc.canny(img, canny_low, canny_high).astype(np.float64)
    else:
        raise InvalidInputError(f"unknown edge detector {detector!r}")
    blurred = imageproc.convolve(edges, imageproc.gaussian_kernel(blur_size, blur_sigma))
    return imageproc.threshold_mask(blurred, threshold)


def row_patches(img: np.ndarray, n_rows: int, row_h: int, image_id: str = "") -> list[Patch]:
    """Full-width horizontal strips, top to bottom, slots 1..n_rows.

    The vertical stride (height - row_h) / (n_rows - 1) must be a
    nonnegative integer so rows are evenly spaced.
    """
    img = np.asarray(img, dtype=np.float64)
    h = img.shape[0]
    if n_rows < 1 or row_h < 1 or row_h > h:
        raise InvalidInputError(f"cannot cut {n_rows} rows of height {row_h} from {img.shape}")
    if n_rows == 1:
        offsets = [0]
    else:
        span = h - row_h
        if span % (n_rows - 1) != 0:
            raise InvalidInputError(
                f"row stride ({h} - {row_h}) / {n_rows - 1} is not an integer")
        stride = span // (n_rows - 1)
        offsets = [i * stride for i in range(n_rows)]
    return [
        _standardized_patch(img[top:top + row_h, :], image_id, slot)
        for slot, top in enumerate(offsets, start=1)
    ]


def whole_image_vector(img: np.ndarray, side: int = 32, image_id: str = "") -> Patch:
    """Resize to side x side, flatten row-major, standardize."""
    resized = imageproc.resize_bilinear(img, side, side)
    return _standardized_patch(resized, image_id, WHOLE_IMAGE_SLOT)


# ---------------------------------------------------------------------------
# Debug dump format: one file per image.  Text header line
# "NPPATCH1 <image_id> <count> <patch_h> <patch_w>\n" followed by
# count * patch_h * patch_w little-endian float64 values.

_DUMP_MAGIC = "NPPATCH1"


def write_patch_dump(path, image_id: str, patches: list[Patch],
                     patch_h: int, patch_w: int) -> None:
    if " " in image_id:
        raise InvalidInputError(f"image id {image_id!r} must not contain spaces")
    feats = np.array([p.features for p in patches], dtype="<f8")
    feats = feats.reshape(len(patches), patch_h * patch_w)
    header = f"{_DUMP_MAGIC} {image_id} {len(patches)} {patch_h} {patch_w}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(feats.tobytes())


def read_patch_dump(path) -> tuple[str, int, int, np.ndarray]:
    """Return (image_id, patch_h, patch_w, features[count, patch_h*patch_w])."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").split()
        if len(header) != 5 or header[0] != _DUMP_MAGIC:
            raise InvalidInputError(f"{path} is not a patch dump")
        image_id, count, ph, pw = header[1], int(header[2]), int(header[3]), int(header[4])
        feats = np.frombuffer(fh.read(), dtype="<f8").reshape(count, ph * pw)
    return image_id, ph, pw, feats
