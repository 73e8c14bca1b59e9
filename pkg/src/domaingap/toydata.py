"""Procedural two-domain scene generator with exact label maps.

Every scene is a stack of simple shapes, one shape family per class: blobs
(leafs), circles (peppers), small caps on the circles (peduncles), vertical bars
(stems), short slanted bars (shoots), thin lines (wires) and small disks (cuts)
over a background fill.  Geometry depends only on ``(seed, index)``, so the two
styles of the same scene share the same label map:

``X_clean``
    flat per-object colors, hue jitter of a few degrees, no noise.
``Y_textured``
    per-class hue shift (``HUE_SHIFT``), a multiplicative illumination ramp and
    per-channel additive texture noise with a grain of ``noise_scale`` pixels.
"""

from __future__ import annotations

import colorsys
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import N_CLASSES
from .dataset import write_pair
from .exceptions import ConfigError, DatasetError
from .imgproc import CLASS_NAMES, resample_bilinear
from .parallel import worker_count

STYLES = ("X_clean", "Y_textured")
SPEC_FILE = "spec.json"

# (hue in degrees, saturation, value) of each class in the clean style
BASE_COLOR = {
    0: (30.0, 0.45, 0.35),
    1: (110.0, 0.65, 0.55),
    2: (15.0, 0.85, 0.85),
    3: (80.0, 0.60, 0.50),
    4: (140.0, 0.50, 0.45),
    5: (170.0, 0.45, 0.60),
    6: (220.0, 0.25, 0.70),
    7: (300.0, 0.35, 0.80),
}

# hue offset in degrees applied by the textured style
HUE_SHIFT = {0: 15.0, 1: -20.0, 2: 30.0, 3: 20.0, 4: -25.0, 5: 25.0, 6: 20.0, 7: -30.0}

# inclusive (min, max) object counts
DEFAULT_COUNTS = {
    "leafs": (3, 6),
    "peppers": (1, 3),
    "stems": (1, 2),
    "shoots": (1, 3),
    "wires": (1, 2),
    "cuts": (1, 2),
}

# size ranges as fractions of the image side
DEFAULT_SIZES = {
    "leaf_axis": (0.09, 0.22),
    "pepper_radius": (0.09, 0.15),
    "stem_width": (0.045, 0.07),
    "shoot_length": (0.15, 0.32),
    "cut_radius": (0.03, 0.045),
}


@dataclass
class ToySceneSpec:
    """All parameters of a generated set; written to ``spec.json`` next to the data."""

    seed: int = 0
    image_size: int = 64
    style: str = "X_clean"
    counts: dict = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    sizes: dict = field(default_factory=lambda: dict(DEFAULT_SIZES))
    hue_jitter: float = 4.0
    noise_amplitude: float = 0.08
    illumination: tuple = (0.75, 1.25)
    noise_scale: int = 1
    max_attempts: int = 50

    def validate(self) -> "ToySceneSpec":
        if self.style not in STYLES:
            raise ConfigError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.image_size < 16:
            raise ConfigError("image_size must be at least 16")
        for name, (lo, hi) in self.counts.items():
            if lo < 1 or hi < lo:
                raise ConfigError(f"bad count range for {name}: {(lo, hi)}")
        lo, hi = self.illumination
        if not 0 < lo <= hi:
            raise ConfigError("illumination range must be positive and ordered")
        if self.noise_scale < 1:
            raise ConfigError("noise_scale must be at least 1")
        if self.noise_amplitude < 0 or self.hue_jitter < 0:
            raise ConfigError("noise_amplitude and hue_jitter must be non-negative")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["illumination"] = list(self.illumination)
        d["counts"] = {k: list(v) for k, v in self.counts.items()}
        d["sizes"] = {k: list(v) for k, v in self.sizes.items()}
        d["classes"] = list(CLASS_NAMES)
        d["base_color_hsv"] = {CLASS_NAMES[k]: list(v) for k, v in BASE_COLOR.items()}
        d["hue_shift"] = {CLASS_NAMES[k]: v for k, v in HUE_SHIFT.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ToySceneSpec":
        data = {k: v for k, v in data.items() if k not in ("classes", "base_color_hsv", "hue_shift")}
        if "illumination" in data:
            data["illumination"] = tuple(data["illumination"])
        for key in ("counts", "sizes"):
            if key in data:
                data[key] = {k: tuple(v) for k, v in data[key].items()}
        return cls(**data).validate()


# ---------------------------------------------------------------------------
# geometry


def _grid(n):
    yy, xx = np.mgrid[0:n, 0:n]
    return yy + 0.5, xx + 0.5


def _segment_mask(yy, xx, p0, p1, width):
    (y0, x0), (y1, x1) = p0, p1
    dy, dx = y1 - y0, x1 - x0
    length2 = dy * dy + dx * dx
    t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / max(length2, 1e-12), 0.0, 1.0)
    d2 = (yy - (y0 + t * dy)) ** 2 + (xx - (x0 + t * dx)) ** 2
    return d2 <= (width / 2.0) ** 2


def _shapes(spec: ToySceneSpec, rng: np.random.Generator):
    """Yield ``(class id, mask, geometry)`` in paint order (later shapes occlude
    earlier ones).  Pepper circles are painted last, so no other shape covers them.
    """
    n = spec.image_size
    yy, xx = _grid(n)
    c, s = spec.counts, spec.sizes

    def count(name):
        lo, hi = c[name]
        return int(rng.integers(lo, hi + 1))

    def size(name):
        lo, hi = s[name]
        return rng.uniform(lo, hi) * n

    for _ in range(count("leafs")):
        cy, cx = rng.uniform(0, n, 2)
        a, b = size("leaf_axis"), size("leaf_axis")
        th = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
        v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
        yield 1, (u / a) ** 2 + (v / b) ** 2 <= 1.0, ("ellipse", cy, cx, a, b, th)

    for _ in range(count("stems")):
        x0 = rng.uniform(0.1 * n, 0.9 * n)
        w = size("stem_width")
        top = rng.uniform(0, 0.3 * n)
        yield 4, (np.abs(xx - x0) <= w / 2) & (yy >= top), ("bar", x0, w, top)

    for _ in range(count("shoots")):
        p0 = rng.uniform(0.1 * n, 0.9 * n, 2)
        length = size("shoot_length")
        ang = rng.uniform(-0.8, 0.8) - np.pi / 2
        p1 = (p0[0] + length * np.sin(ang), p0[1] + length * np.cos(ang))
        width = max(2.0, 0.035 * n)
        yield 5, _segment_mask(yy, xx, tuple(p0), p1, width), ("segment", tuple(p0), p1, width)

    for _ in range(count("wires")):
        y0, y1 = rng.uniform(0.05 * n, 0.95 * n, 2)
        yield 6, _segment_mask(yy, xx, (y0, -1.0), (y1, n + 1.0), 1.2), ("segment", (y0, -1.0), (y1, n + 1.0), 1.2)

    for _ in range(count("cuts")):
        r = max(size("cut_radius"), 1.0)
        cy, cx = rng.uniform(r, n - r, 2)
        yield 7, (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r, ("circle", cy, cx, r)

    circles = []
    for _ in range(count("peppers")):
        r = size("pepper_radius")
        cy = rng.uniform(r + 0.12 * n, n - r)
        cx = rng.uniform(r, n - r)
        circles.append((cy, cx, r))
    for cy, cx, r in circles:
        # peduncle: a short cap sitting on top of the circle
        w = max(2.0, 0.4 * r)
        cap = (np.abs(xx - cx) <= w / 2) & (yy >= cy - r - 0.1 * n) & (yy <= cy - 0.7 * r)
        yield 3, cap, ("cap", cx, w, cy - r - 0.1 * n, cy - 0.7 * r)
    for cy, cx, r in circles:
        yield 2, (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r, ("circle", cy, cx, r)


def _color(cls_id: int, jitter: float, style: str) -> np.ndarray:
    h, s, v = BASE_COLOR[cls_id]
    h = h + jitter + (HUE_SHIFT[cls_id] if style == "Y_textured" else 0.0)
    return np.array(colorsys.hsv_to_rgb((h % 360.0) / 360.0, s, v))


def _compose(spec: ToySceneSpec, index: int):
    n = spec.image_size
    for attempt in range(spec.max_attempts):
        rng = np.random.default_rng([spec.seed, index, attempt])
        labels = np.zeros((n, n), dtype=np.int64)
        image = np.empty((n, n, 3))
        image[:] = _color(0, rng.uniform(-spec.hue_jitter, spec.hue_jitter), spec.style)
        shapes = []
        for cls_id, mask, geom in _shapes(spec, rng):
            labels[mask] = cls_id
            image[mask] = _color(cls_id, rng.uniform(-spec.hue_jitter, spec.hue_jitter), spec.style)
            shapes.append((cls_id, geom))
        if np.all(np.bincount(labels.ravel(), minlength=N_CLASSES) > 0):
            return image, labels, shapes
    raise ConfigError(f"scene {index}: could not place all {N_CLASSES} classes in {spec.max_attempts} attempts")


def scene_shapes(spec: ToySceneSpec, index: int) -> list[tuple[int, tuple]]:
    """``(class id, geometry)`` of every shape of scene ``index`` in paint order.

    Geometry tuples start with the shape kind, e.g. ``("circle", cy, cx, r)``
    in pixel units with pixel centres at ``i + 0.5``.
    """
    return _compose(spec.validate(), index)[2]


def render(spec: ToySceneSpec, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Image (``H x W x 3`` in [0, 1]) and label map of scene ``index``.

    The label map depends on ``(spec.seed, index)`` and the geometry fields
    only, never on ``spec.style``.
    """
    spec.validate()
    n = spec.image_size
    image, labels, _ = _compose(spec, index)
    if spec.style == "Y_textured":
        srng = np.random.default_rng([spec.seed, index, 0x7E47])
        lo, hi = spec.illumination
        ang = srng.uniform(0, 2 * np.pi)
        yy, xx = _grid(n)
        ramp = (np.cos(ang) * xx + np.sin(ang) * yy) / n
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
        image = image * (lo + (hi - lo) * ramp)[..., None]
        # uniform noise on a coarse grid, bilinearly upsampled: stays within
        # +-noise_amplitude and is correlated over about noise_scale pixels
        m = -(-n // spec.noise_scale)
        coarse = srng.uniform(-spec.noise_amplitude, spec.noise_amplitude, (m, m, 3))
        image = image + (resample_bilinear(coarse, n, n) if m != n else coarse)
    return np.clip(image, 0.0, 1.0), labels


def generate(spec: ToySceneSpec, n: int, out_dir, workers: int | None = None) -> Path:
    """Write scenes ``1..n`` in the dataset layout plus ``spec.json``."""
    spec.validate()
    if n < 1:
        raise ConfigError("n must be at least 1")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / SPEC_FILE).write_text(json.dumps({**spec.to_dict(), "n": n}, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise DatasetError(f"cannot write to {out}: {e}") from e

    def job(i):
        image, labels = render(spec, i)
        write_pair(out, i, image, labels)

    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        list(pool.map(job, range(1, n + 1)))
    return out
