"""Input validation helpers used by the estimators and functional API."""

from __future__ import annotations

import numpy as np

from .exceptions import ClassRangeError, ShapeError

N_CLASSES = 8


def check_image(image, name: str = "image") -> np.ndarray:
    """Return ``image`` as a float64 ``H x W x 3`` array with values in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_labels(labels, name: str = "labels", n_classes: int = N_CLASSES) -> np.ndarray:
    """Return ``labels`` as an int64 ``H x W`` array with values in ``0..n_classes-1``."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(arr == np.round(arr)):
            raise ClassRangeError(f"{name} contains non-integer values")
    elif arr.dtype.kind not in "iub":
        raise ClassRangeError(f"{name} must be integer-valued")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ClassRangeError(f"{name} contains a class id outside 0..{n_classes - 1}")
    return arr


def check_pair(image, labels) -> tuple[np.ndarray, np.ndarray]:
    img = check_image(image)
    lab = check_labels(labels)
    if img.shape[:2] != lab.shape:
        raise ShapeError(f"image {img.shape[:2]} and label map {lab.shape} sizes differ")
    return img, lab


def check_image_batch(images, name: str = "images") -> list[np.ndarray]:
    """Validate a non-empty sequence (or 4-d array) of equally sized images."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    batch = [check_image(im, name) for im in images]
    if not batch:
        raise ValueError(f"{name} is empty")
    first = batch[0].shape
    for im in batch:
        if im.shape != first:
            raise ShapeError(f"{name} have differing sizes {first} and {im.shape}")
    return batch


def check_label_batch(labels, images: list[np.ndarray]) -> list[np.ndarray]:
    if isinstance(labels, np.ndarray) and labels.ndim == 2:
        labels = [labels]
    labs = [check_labels(lab) for lab in labels]
    if len(labs) != len(images):
        raise ShapeError(f"{len(images)} images but {len(labs)} label maps")
    for im, lab in zip(images, labs):
        if im.shape[:2] != lab.shape:
            raise ShapeError(f"image {im.shape[:2]} and label map {lab.shape} sizes differ")
    return labs


def to_nchw(images: list[np.ndarray]) -> np.ndarray:
    return np.stack(images).transpose(0, 3, 1, 2).copy()


def from_nchw(batch: np.ndarray) -> list[np.ndarray]:
    return list(np.ascontiguousarray(batch.transpose(0, 2, 3, 1)))
