"""Per-class colour and texture statistics, and reports comparing image sets.

Colour is summarised as a 256-bin HSI hue histogram per class, texture as the
contrast / homogeneity / energy / entropy of a gray-level co-occurrence matrix
built from horizontally adjacent pixel pairs.  Histograms from two sets are
compared with the Pearson correlation coefficient.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import N_CLASSES, check_pair
from .dataset import Dataset
from .exceptions import ClassAbsentError, ShapeError, ZeroVarianceError
from .imgproc import ACHROMATIC, CLASS_NAMES, HUE_BINS, hue_bins
from .parallel import worker_count

FEATURE_NAMES = ("contrast", "homogeneity", "energy", "entropy")
DEFAULT_LEVELS = 64


@dataclass
class HueHistogram:
    counts: np.ndarray  # int64[256]
    pixel_count: int
    excluded_count: int

    @property
    def bins(self) -> np.ndarray:
        n = self.counts.sum()
        if n == 0:
            return np.zeros(HUE_BINS)
        return self.counts / n


@dataclass
class GlcmMatrix:
    levels: int
    counts: np.ndarray  # int64[levels, levels]; row = left pixel, col = right pixel
    pair_count: int

    @property
    def cells(self) -> np.ndarray:
        if self.pair_count == 0:
            return np.zeros((self.levels, self.levels))
        return self.counts / self.pair_count


@dataclass(frozen=True)
class HaralickFeatures:
    contrast: float
    homogeneity: float
    energy: float
    entropy: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.contrast, self.homogeneity, self.energy, self.entropy)


def _class_hue_counts(bins: np.ndarray, labels: np.ndarray, class_id: int):
    sel = bins[labels == class_id]
    valid = sel[sel != ACHROMATIC]
    return np.bincount(valid, minlength=HUE_BINS).astype(np.int64), int(sel.size), int(sel.size - valid.size)


def hue_histogram(image, labels, class_id: int) -> HueHistogram:
    """Hue histogram over the chromatic pixels labelled ``class_id``."""
    img, lab = check_pair(image, labels)
    if not 0 <= class_id < N_CLASSES:
        raise ValueError(f"class_id must be in 0..{N_CLASSES - 1}")
    counts, pixels, excluded = _class_hue_counts(hue_bins(img), lab, class_id)
    if pixels == excluded:
        raise ClassAbsentError(f"class {class_id} has no chromatic pixels")
    return HueHistogram(counts, pixels - excluded, excluded)


def quantize_gray(image: np.ndarray, levels: int) -> np.ndarray:
    gray = (image[..., 0] + image[..., 1] + image[..., 2]) / 3.0
    return np.clip(np.floor(gray * levels), 0, levels - 1).astype(np.int64)


def _glcm_counts(q: np.ndarray, labels: np.ndarray, class_id: int, levels: int) -> np.ndarray:
    both = (labels[:, :-1] == class_id) & (labels[:, 1:] == class_id)
    codes = q[:, :-1][both] * levels + q[:, 1:][both]
    return np.bincount(codes, minlength=levels * levels).reshape(levels, levels).astype(np.int64)


def glcm(image, labels, class_id: int, levels: int = DEFAULT_LEVELS) -> GlcmMatrix:
    """Co-occurrence of (pixel, right neighbour) gray levels, both inside ``class_id``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    img, lab = check_pair(image, labels)
    counts = _glcm_counts(quantize_gray(img, levels), lab, class_id, levels)
    n = int(counts.sum())
    if n == 0:
        raise ClassAbsentError(f"class {class_id} has no horizontally adjacent pixel pairs")
    return GlcmMatrix(levels, counts, n)


def haralick(g: GlcmMatrix | np.ndarray) -> HaralickFeatures:
    p = g.cells if isinstance(g, GlcmMatrix) else np.asarray(g, dtype=np.float64)
    n = p.shape[0]
    i, j = np.indices((n, n))
    d = np.abs(i - j)
    nz = p > 0
    return HaralickFeatures(
        contrast=float((d * d * p).sum()),
        homogeneity=float((p / (1.0 + d)).sum()),
        energy=float((p * p).sum()),
        entropy=float(-(p[nz] * np.log(p[nz])).sum()) + 0.0,  # no -0.0 for a single cell
    )


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("pearson needs two 1-d vectors of equal length")
    if a.size < 2:
        raise ValueError("pearson needs at least two values")
    da = a - a.mean()
    db = b - b.mean()
    saa = (da * da).sum()
    sbb = (db * db).sum()
    if saa == 0.0 or sbb == 0.0:
        raise ZeroVarianceError("pearson correlation undefined for a constant vector")
    r = (da * db).sum() / math.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


# ---------------------------------------------------------------------------
# set-level aggregation


@dataclass
class _ImageStats:
    hue_counts: np.ndarray  # [L, 256]
    pixel_counts: np.ndarray  # [L]
    excluded: np.ndarray  # [L]
    glcm_counts: np.ndarray  # [L, levels, levels]


def _image_stats(image, labels, classes: Sequence[int], levels: int) -> _ImageStats:
    img, lab = check_pair(image, labels)
    bins = hue_bins(img)
    q = quantize_gray(img, levels)
    hue = np.zeros((N_CLASSES, HUE_BINS), np.int64)
    pix = np.zeros(N_CLASSES, np.int64)
    exc = np.zeros(N_CLASSES, np.int64)
    gl = np.zeros((N_CLASSES, levels, levels), np.int64)
    for c in classes:
        hue[c], pix[c], exc[c] = _class_hue_counts(bins, lab, c)
        gl[c] = _glcm_counts(q, lab, c, levels)
    return _ImageStats(hue, pix, exc, gl)


@dataclass
class SetSummary:
    name: str
    n_images: int
    hue_hist: dict[int, np.ndarray | None]
    pixel_count: dict[int, int]
    excluded_count: dict[int, int]
    features: dict[int, HaralickFeatures | None]


def _summarise(name, pairs, classes, levels, hue_mode) -> SetSummary:
    pairs = list(pairs)
    jobs = worker_count()
    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            stats = list(pool.map(lambda p: _image_stats(p[0], p[1], classes, levels), pairs))
    else:
        stats = [_image_stats(im, lab, classes, levels) for im, lab in pairs]

    hue_hist, pixel_count, excluded_count, features = {}, {}, {}, {}
    for c in classes:
        pixel_count[c] = int(sum(s.pixel_counts[c] for s in stats))
        excluded_count[c] = int(sum(s.excluded[c] for s in stats))
        if hue_mode == "pooled":
            counts = sum(s.hue_counts[c] for s in stats)
            hue_hist[c] = counts / counts.sum() if counts.sum() else None
        else:
            per_image = [s.hue_counts[c] / s.hue_counts[c].sum() for s in stats if s.hue_counts[c].sum()]
            hue_hist[c] = np.mean(per_image, axis=0) if per_image else None
        # average of the per-image normalised matrices, then the features
        mats = [s.glcm_counts[c] / s.glcm_counts[c].sum() for s in stats if s.glcm_counts[c].sum()]
        features[c] = haralick(np.mean(mats, axis=0)) if mats else None
    return SetSummary(name, len(pairs), hue_hist, pixel_count, excluded_count, features)


@dataclass
class GapReport:
    set_names: list[str]
    classes: list[int]
    levels: int
    n_images: int
    hue_mode: str
    summaries: dict[str, SetSummary]
    correlations: dict[tuple[str, str], dict[int, float | None]] = field(default_factory=dict)

    @property
    def class_names(self) -> list[str]:
        return [CLASS_NAMES[c] for c in self.classes]

    def mean_correlation(self, a: str, b: str) -> float | None:
        vals = [v for v in self._corr(a, b).values() if v is not None]
        return float(np.mean(vals)) if vals else None

    def _corr(self, a: str, b: str) -> dict[int, float | None]:
        if (a, b) in self.correlations:
            return self.correlations[(a, b)]
        return self.correlations[(b, a)]

    def feature_means(self, name: str) -> dict[str, float]:
        """Per-feature average over the classes present in ``name``."""
        feats = [f for f in self.summaries[name].features.values() if f is not None]
        return {k: float(np.mean([getattr(f, k) for f in feats])) for k in FEATURE_NAMES}

    def feature_gap(self, name: str, reference: str) -> dict[str, float]:
        """Mean over shared classes of ``|feature(name) - feature(reference)|``."""
        fa = self.summaries[name].features
        fb = self.summaries[reference].features
        shared = [c for c in self.classes if fa.get(c) is not None and fb.get(c) is not None]
        return {
            k: float(np.mean([abs(getattr(fa[c], k) - getattr(fb[c], k)) for c in shared]))
            for k in FEATURE_NAMES
        }

    # -- serialisation -------------------------------------------------------
    def to_dict(self) -> dict:
        sets = {}
        for name in self.set_names:
            s = self.summaries[name]
            per_class = {}
            for c in self.classes:
                f = s.features[c]
                per_class[CLASS_NAMES[c]] = {
                    "present": f is not None,
                    "features": None if f is None else dict(zip(FEATURE_NAMES, f.as_tuple())),
                    "pixel_count": s.pixel_count[c],
                    "excluded_count": s.excluded_count[c],
                    "hue_histogram": None if s.hue_hist[c] is None else s.hue_hist[c].tolist(),
                }
            sets[name] = {
                "n_images": s.n_images,
                "classes": per_class,
                "feature_means": self.feature_means(name),
            }
        corr = {}
        for (a, b), vals in self.correlations.items():
            corr[f"{a}~{b}"] = {
                "per_class": {CLASS_NAMES[c]: vals[c] for c in self.classes},
                "mean": self.mean_correlation(a, b),
            }
        return {
            "correlation_measure": "pearson",
            "hue_histogram_mode": self.hue_mode,
            "achromatic_pixels": "excluded",
            "glcm_levels": self.levels,
            "glcm_offset": [0, 1],
            "n_images": self.n_images,
            "sets": sets,
            "correlations": corr,
        }

    def features_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["set", "class", "levels", *FEATURE_NAMES, "pixel_count", "excluded_count"])
        for name in self.set_names:
            s = self.summaries[name]
            for c in self.classes:
                f = s.features[c]
                vals = ["absent"] * 4 if f is None else [repr(v) for v in f.as_tuple()]
                w.writerow([name, CLASS_NAMES[c], self.levels, *vals, s.pixel_count[c], s.excluded_count[c]])
        return buf.getvalue()

    def correlations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pairs = list(self.correlations)
        w.writerow(["class", *[f"pearson({a},{b})" for a, b in pairs]])
        for c in self.classes:
            row = [CLASS_NAMES[c]]
            for p in pairs:
                v = self.correlations[p][c]
                row.append("absent" if v is None else repr(v))
            w.writerow(row)
        means = [self.mean_correlation(a, b) for a, b in pairs]
        w.writerow(["mean", *["absent" if m is None else repr(m) for m in means]])
        return buf.getvalue()

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "gap_features.csv": self.features_csv(),
            "gap_correlations.csv": self.correlations_csv(),
            "gap_report.json": json.dumps(self.to_dict(), indent=2) + "\n",
        }
        for fname, text in files.items():
            (out / fname).write_text(text)
        return [out / f for f in files]


def _as_pairs(source, n_images: int) -> Iterable[tuple[np.ndarray, np.ndarray]]:
    if isinstance(source, (str, Path)):
        source = Dataset(source)
    if isinstance(source, Dataset):
        return list(source.head(n_images).pairs())
    pairs = list(source)
    if len(pairs) < n_images:
        raise ValueError(f"set holds {len(pairs)} pairs, {n_images} requested")
    return pairs[:n_images]


def gap_report(
    sets: Mapping[str, object],
    n_images: int = 10,
    levels: int = DEFAULT_LEVELS,
    classes: Sequence[int] | None = None,
    hue_mode: str = "pooled",
) -> GapReport:
    """Compare two or three image sets class by class.

    ``sets`` maps a display name to a :class:`Dataset`, a dataset directory, or
    a sequence of ``(image, labels)`` pairs.  The first ``n_images`` of each are
    used.  ``hue_mode="pooled"`` sums pixel counts over images before
    normalising; ``"mean"`` averages the per-image normalised histograms.
    """
    if not 2 <= len(sets) <= 3:
        raise ValueError("gap_report compares two or three sets")
    if hue_mode not in ("pooled", "mean"):
        raise ValueError("hue_mode must be 'pooled' or 'mean'")
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    classes = list(range(N_CLASSES)) if classes is None else sorted(set(classes))
    for c in classes:
        if not 0 <= c < N_CLASSES:
            raise ValueError(f"class id {c} outside 0..{N_CLASSES - 1}")

    names = list(sets)
    summaries = {
        name: _summarise(name, _as_pairs(src, n_images), classes, levels, hue_mode)
        for name, src in sets.items()
    }
    report = GapReport(names, classes, levels, n_images, hue_mode, summaries)
    for a, b in itertools.combinations(names, 2):
        vals: dict[int, float | None] = {}
        for c in classes:
            ha, hb = summaries[a].hue_hist[c], summaries[b].hue_hist[c]
            if ha is None or hb is None:
                vals[c] = None
                continue
            try:
                vals[c] = pearson(ha, hb)
            except ZeroVarianceError:
                vals[c] = None
        report.correlations[(a, b)] = vals
    return report


class ClassTextureFeatures(TransformerMixin, BaseEstimator):
    """Per-image, per-class Haralick features as a flat feature matrix.

    ``X`` is a sequence of ``(image, labels)`` pairs.  Output has one row per
    pair and ``4 * len(classes)`` columns ordered class-major; classes absent
    from an image yield NaN.
    """

    def __init__(self, levels: int = DEFAULT_LEVELS, classes: Sequence[int] | None = None):
        self.levels = levels
        self.classes = classes

    def fit(self, X, y=None):
        self.classes_ = np.arange(N_CLASSES) if self.classes is None else np.asarray(sorted(self.classes))
        self.n_features_out_ = 4 * len(self.classes_)
        return self

    def transform(self, X):
        if not hasattr(self, "classes_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit before transform")
        rows = []
        for image, labels in X:
            row = []
            for c in self.classes_:
                try:
                    row.extend(haralick(glcm(image, labels, int(c), self.levels)).as_tuple())
                except ClassAbsentError:
                    row.extend([np.nan] * 4)
            rows.append(row)
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), self.n_features_out_)

    def get_feature_names_out(self, input_features=None):
        return np.asarray([f"{CLASS_NAMES[c]}_{k}" for c in self.classes_ for k in FEATURE_NAMES], dtype=object)
