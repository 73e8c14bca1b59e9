"""Image and label-map primitives: HSI hue, cropping, resampling and PNG I/O.

Images are ``H x W x 3`` float64 arrays in [0, 1] (R, G, B order).  Label maps
are ``H x W`` integer arrays holding class ids ``0..7``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._validation import N_CLASSES, check_image, check_labels
from .exceptions import BoundsError, ClassRangeError, ImageFormatError, ShapeError

CLASS_NAMES = (
    "background",
    "leafs",
    "peppers",
    "peduncles",
    "stems",
    "shoots",
    "wires",
    "cuts",
)
HUE_BINS = 256
ACHROMATIC = -1


def rgb_to_hue(r: float, g: float, b: float) -> int:
    """HSI hue of one pixel quantised to 0..255, or ``ACHROMATIC`` when r == g == b."""
    if r == g == b:
        return ACHROMATIC
    # the ratio is scale free; dividing by the chroma keeps tiny differences from underflowing
    c = max(r, g, b) - min(r, g, b)
    r, g, b = r / c, g / c, b / c
    num = 0.5 * ((r - g) + (r - b))
    den = math.sqrt((r - g) ** 2 + (r - b) * (g - b))
    theta = math.degrees(math.acos(max(-1.0, min(1.0, num / den))))
    if b > g:
        theta = 360.0 - theta
    return min(int(math.floor(theta / 360.0 * HUE_BINS)), HUE_BINS - 1)


def hue_bins(image: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rgb_to_hue` over an image; achromatic pixels get ``ACHROMATIC``."""
    img = np.asarray(image, dtype=np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    achromatic = (r == g) & (g == b)
    c = np.where(achromatic, 1.0, img.max(axis=-1) - img.min(axis=-1))
    r, g, b = r / c, g / c, b / c
    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.clip(num / np.where(achromatic, 1.0, den), -1.0, 1.0)
    theta = np.degrees(np.arccos(ratio))
    theta = np.where(b > g, 360.0 - theta, theta)
    bins = np.minimum(np.floor(theta / 360.0 * HUE_BINS), HUE_BINS - 1).astype(np.int64)
    bins[achromatic] = ACHROMATIC
    return bins


@dataclass(frozen=True)
class CropRect:
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise BoundsError("crop origin must be non-negative")
        if self.width < 1 or self.height < 1:
            raise BoundsError("crop extents must be positive")

    @classmethod
    def centered(cls, height: int, width: int, size: int | tuple[int, int]) -> "CropRect":
        """A ``size`` window centred in an image of ``height x width``."""
        ch, cw = (size, size) if isinstance(size, int) else size
        if ch > height or cw > width:
            raise BoundsError(f"crop {ch}x{cw} larger than image {height}x{width}")
        return cls((width - cw) // 2, (height - ch) // 2, cw, ch)

    def within(self, rect: "CropRect") -> "CropRect":
        """Express ``rect`` (relative to this crop) in the parent image's frame."""
        return CropRect(self.x0 + rect.x0, self.y0 + rect.y0, rect.width, rect.height)


def crop(array: np.ndarray, rect: CropRect) -> np.ndarray:
    """``out[i, j] = array[y0 + i, x0 + j]``; works for images and label maps."""
    h, w = array.shape[:2]
    if rect.x0 + rect.width > w or rect.y0 + rect.height > h:
        raise BoundsError(f"crop {rect} exceeds image bounds {h}x{w}")
    return array[rect.y0 : rect.y0 + rect.height, rect.x0 : rect.x0 + rect.width].copy()


def crop_pair(image: np.ndarray, labels: np.ndarray, rect: CropRect):
    if image.shape[:2] != labels.shape[:2]:
        raise ShapeError("image and label map sizes differ")
    return crop(image, rect), crop(labels, rect)


def _source_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, clamped at the borders
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resample_bilinear(image: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel sample centres and edge clamping."""
    if new_h < 1 or new_w < 1:
        raise ValueError("target size must be positive")
    img = np.asarray(image, dtype=np.float64)
    r0, r1, fr = _source_coords(img.shape[0], new_h)
    c0, c1, fc = _source_coords(img.shape[1], new_w)
    extra = (slice(None),) + (None,) * (img.ndim - 1)
    rows = img[r0] * (1.0 - fr)[extra] + img[r1] * fr[extra]
    extra_c = (None, slice(None)) + (None,) * (img.ndim - 2)
    return rows[:, c0] * (1.0 - fc)[extra_c] + rows[:, c1] * fc[extra_c]


def resample_nearest(labels: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Nearest-neighbour resize for label maps (class ids are never blended)."""
    if new_h < 1 or new_w < 1:
        raise ValueError("target size must be positive")
    h, w = labels.shape[:2]
    rows = np.minimum(np.floor((np.arange(new_h) + 0.5) * h / new_h), h - 1).astype(np.int64)
    cols = np.minimum(np.floor((np.arange(new_w) + 0.5) * w / new_w), w - 1).astype(np.int64)
    return labels[rows][:, cols].copy()


# ---------------------------------------------------------------------------
# PNG I/O


def _open(path) -> Image.Image:
    try:
        im = Image.open(path)
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise ImageFormatError(f"cannot parse image {os.fspath(path)}: {exc}") from exc
    return im


def load_image(path) -> np.ndarray:
    im = _open(path)
    if im.mode != "RGB":
        raise ImageFormatError(f"{os.fspath(path)}: expected 8-bit RGB, found mode {im.mode}")
    return np.asarray(im, dtype=np.float64) / 255.0


def save_image(path, image: np.ndarray) -> None:
    img = check_image(image)
    arr = np.round(img * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def load_labels(path) -> np.ndarray:
    im = _open(path)
    if im.mode != "L":
        raise ImageFormatError(
            f"{os.fspath(path)}: label maps must be single-channel 8-bit, found mode {im.mode}"
        )
    arr = np.asarray(im, dtype=np.int64)
    if arr.size and arr.max() >= N_CLASSES:
        raise ClassRangeError(f"{os.fspath(path)}: label value {arr.max()} >= {N_CLASSES}")
    return arr


def save_labels(path, labels: np.ndarray) -> None:
    lab = check_labels(labels)
    Image.fromarray(lab.astype(np.uint8)).save(path, format="PNG")


def image_io(op: str, path, kind: str, data: np.ndarray | None = None):
    """Single entry point: ``image_io("load", p, "rgb8")`` / ``image_io("save", p, "label8", arr)``."""
    table = {
        ("load", "rgb8"): lambda: load_image(path),
        ("load", "label8"): lambda: load_labels(path),
        ("save", "rgb8"): lambda: save_image(path, data),
        ("save", "label8"): lambda: save_labels(path, data),
    }
    try:
        return table[(op, kind)]()
    except KeyError:
        raise ValueError(f"unsupported image_io combination {(op, kind)}") from None
