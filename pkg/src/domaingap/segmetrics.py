"""Pixel-level confusion matrix and intersection-over-union.

``counts[i, j]`` is the number of pixels with ground truth ``i`` predicted as
``j``, summed over every image of the dataset before any ratio is taken.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ._validation import N_CLASSES, check_labels
from .exceptions import ShapeError
from .imgproc import CLASS_NAMES


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # int64[L, L]; row = ground truth, column = prediction

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def transpose(self) -> "ConfusionMatrix":
        """The row = prediction convention, for comparison."""
        return ConfusionMatrix(self.counts.T.copy())

    def to_csv(self) -> str:
        names = _names(self.n_classes)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gt\\pred", *names])
        for name, row in zip(names, self.counts):
            w.writerow([name, *[int(v) for v in row]])
        return buf.getvalue()


@dataclass
class IouReport:
    per_class: list[float | None]  # None marks a class absent from both gt and prediction
    mean_iou: float
    strict: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "iou"])
        for name, v in zip(_names(len(self.per_class)), self.per_class):
            w.writerow([name, "absent" if v is None else repr(v)])
        w.writerow(["mean", repr(self.mean_iou)])
        return buf.getvalue()


def _names(n: int) -> list[str]:
    return list(CLASS_NAMES) if n == N_CLASSES else [f"class{i}" for i in range(n)]


def confusion_matrix(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]], n_classes: int = N_CLASSES
) -> ConfusionMatrix:
    """Accumulate ``(ground truth, prediction)`` label-map pairs."""
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for gt, pred in pairs:
        gt = check_labels(gt, "ground truth", n_classes)
        pred = check_labels(pred, "prediction", n_classes)
        if gt.shape != pred.shape:
            raise ShapeError(f"ground truth {gt.shape} and prediction {pred.shape} sizes differ")
        codes = gt.ravel() * n_classes + pred.ravel()
        counts += np.bincount(codes, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts)


def mean_iou(c: ConfusionMatrix | np.ndarray, strict_l: bool = False) -> IouReport:
    """Per-class ``C_ii / (G_i + P_i - C_ii)`` and their mean.

    Classes with ``G_i + P_i == 0`` have no defined IOU and are left out of the
    mean.  ``strict_l=True`` instead divides the sum by the full class count,
    scoring such classes as 0.
    """
    counts = c.counts if isinstance(c, ConfusionMatrix) else np.asarray(c, dtype=np.int64)
    diag = np.diag(counts).astype(np.float64)
    gt_total = counts.sum(axis=1)
    pred_total = counts.sum(axis=0)
    per_class: list[float | None] = []
    for i in range(counts.shape[0]):
        if gt_total[i] + pred_total[i] == 0:
            per_class.append(None)
        else:
            per_class.append(float(diag[i] / (gt_total[i] + pred_total[i] - diag[i])))
    present = [v for v in per_class if v is not None]
    if strict_l:
        mean = float(sum(present) / counts.shape[0])
    else:
        mean = float(sum(present) / len(present)) if present else 0.0
    return IouReport(per_class, mean, strict_l)


def write_reports(out_dir, cm: ConfusionMatrix, report: IouReport, prefix: str = "") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a = out / f"{prefix}confusion.csv"
    b = out / f"{prefix}iou.csv"
    a.write_text(cm.to_csv())
    b.write_text(report.to_csv())
    return [a, b]
