"""Small encoder-decoder segmentation network and the A-G experiment harness.

The network: two stride-2 conv stages, two plain 3x3 conv blocks followed by
dropout, two nearest-upsample + 3x3 conv stages, and a 1x1 head emitting eight
logits per pixel.  Each scheme trains on one set, optionally fine-tunes on a
second (same ADAM preset, fresh optimizer state, a fraction of the iterations)
and reports IOU on a third.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import autodiff as ad
from ._validation import N_CLASSES, check_image, check_image_batch, check_label_batch, to_nchw
from .autodiff import AdamState, Tensor
from .autodiff.checkpoint import load_checkpoint, save_checkpoint
from .dataset import Dataset, DatasetRef
from .exceptions import ConfigError, ShapeError, TrainingError
from .imgproc import CLASS_NAMES
from .nets import Conv, Network
from .parallel import worker_count
from .segmetrics import IouReport, confusion_matrix, mean_iou

log = logging.getLogger(__name__)


class SegNet(Network):
    def __init__(self, nf: int = 16, rng: np.random.Generator | None = None, dropout: float = 0.5,
                 image_size: int = 64, n_classes: int = N_CLASSES):
        if image_size % 4:
            raise ConfigError(f"image_size {image_size} is not divisible by 4")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.nf = nf
        self.dropout = dropout
        self.image_size = image_size
        self.n_classes = n_classes
        init = "he_uniform"
        self.enc1 = Conv("enc1", 3, nf, 3, rng, stride=2, padding=1, init=init)
        self.enc2 = Conv("enc2", nf, 2 * nf, 3, rng, stride=2, padding=1, init=init)
        self.mid1 = Conv("mid1", 2 * nf, 2 * nf, 3, rng, padding=1, init=init)
        self.mid2 = Conv("mid2", 2 * nf, 2 * nf, 3, rng, padding=1, init=init)
        self.dec1 = Conv("dec1", 2 * nf, nf, 3, rng, padding=1, init=init)
        self.dec2 = Conv("dec2", nf, nf, 3, rng, padding=1, init=init)
        self.head = Conv("head", nf, n_classes, 1, rng, init=init)
        self.convs = [self.enc1, self.enc2, self.mid1, self.mid2, self.dec1, self.dec2, self.head]

    def logits(self, x: Tensor, rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
        """``x`` is ``[N,3,H,W]`` scaled to [-1, 1]; returns ``[N,L,H,W]`` raw scores."""
        h = ad.relu(self.enc1(x))
        h = ad.relu(self.enc2(h))
        h = ad.relu(self.mid1(h))
        h = ad.relu(self.mid2(h))
        if training and self.dropout > 0:
            h = ad.dropout(h, self.dropout, rng, training=True)
        h = ad.relu(self.dec1(ad.upsample2x(h)))
        h = ad.relu(self.dec2(ad.upsample2x(h)))
        return self.head(h)

    __call__ = logits


@dataclass
class SegTrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 600
    batch: int = 4
    dropout: float = 0.5
    seed: int = 0
    nf: int = 16
    finetune_fraction: float = 0.25

    def validate(self) -> "SegTrainConfig":
        if self.iterations < 0 or self.batch < 1 or self.nf < 1:
            raise ConfigError("iterations must be >= 0, batch and nf >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ConfigError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        if not 0.0 <= self.finetune_fraction <= 1.0:
            raise ConfigError("finetune_fraction must lie in [0, 1]")
        return self

    @property
    def finetune_iterations(self) -> int:
        return int(round(self.iterations * self.finetune_fraction))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SegTrainConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown segmentation config keys: {sorted(unknown)}")
        return cls(**data).validate()


def build_segnet(cfg: SegTrainConfig, image_size: int = 64) -> SegNet:
    return SegNet(cfg.nf, np.random.default_rng([cfg.seed, 0x5E9]), cfg.dropout, image_size)


def _as_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, Dataset):
        dataset = list(dataset.pairs())
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training set is empty")
    images = check_image_batch([p[0] for p in dataset], "images")
    labels = check_label_batch([p[1] for p in dataset], images)
    return to_nchw(images) * 2.0 - 1.0, np.stack(labels)


def train_segnet(net: SegNet, dataset, cfg: SegTrainConfig, iterations: int | None = None,
                 opt: AdamState | None = None, stage: int = 0) -> list[float]:
    """Minimise pixel-wise cross-entropy; returns the per-iteration loss curve.

    ``dataset`` is a :class:`Dataset` or a sequence of ``(image, labels)``.
    Batches and dropout masks come from an RNG keyed on ``(seed, stage,
    iteration)``, so runs are reproducible.
    """
    cfg.validate()
    xs, ys = _as_arrays(dataset)
    if xs.shape[2] != net.image_size or xs.shape[3] != net.image_size:
        raise ShapeError(f"images are {xs.shape[2:]}, network expects {net.image_size}x{net.image_size}")
    n_iter = cfg.iterations if iterations is None else iterations
    opt = opt or AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    params = net.parameters()
    curve = []
    for it in range(n_iter):
        rng = np.random.default_rng([cfg.seed, 0x5E6, stage, it])
        idx = rng.integers(len(xs), size=cfg.batch)
        net.zero_grad()
        loss = ad.cross_entropy(net.logits(Tensor(xs[idx]), rng, training=True), ys[idx])
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite segmentation loss at iteration {it} (stage {stage})")
        ad.backward(loss)
        ad.adam_step(params, opt)
        curve.append(value)
    return curve


def _prepare_image(net: SegNet, image) -> Tensor:
    image = check_image(image)
    if image.shape[:2] != (net.image_size, net.image_size):
        raise ShapeError(f"image is {image.shape[:2]}, network expects {net.image_size}x{net.image_size}")
    return Tensor(to_nchw(image[None]) * 2.0 - 1.0)


def predict_proba(net: SegNet, image) -> np.ndarray:
    """Per-pixel class probabilities, ``H x W x 8``."""
    with ad.no_grad():
        p = ad.softmax_channel(net.logits(_prepare_image(net, image))).data[0]
    return np.moveaxis(p, 0, -1)


def predict(net: SegNet, image) -> np.ndarray:
    """Label map by per-pixel argmax; ties go to the lowest class index."""
    with ad.no_grad():
        z = net.logits(_prepare_image(net, image)).data[0]
    return np.argmax(z, axis=0).astype(np.int64)


def evaluate(net: SegNet, dataset) -> tuple:
    pairs = list(dataset.pairs()) if isinstance(dataset, Dataset) else list(dataset)
    cm = confusion_matrix((gt, predict(net, img)) for img, gt in pairs)
    return cm, mean_iou(cm)


# ---------------------------------------------------------------------------
# estimator


class SegNetSegmenter(ClassifierMixin, BaseEstimator):
    """``fit(X, y)`` with ``X`` a list of images and ``y`` their label maps.

    ``score`` returns mean IOU rather than pixel accuracy.  With
    ``warm_start=True`` a second ``fit`` continues from the current weights
    with a fresh optimizer, which is how fine-tuning is done.
    """

    def __init__(self, nf=16, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8, iterations=600,
                 batch=4, dropout=0.5, seed=0, warm_start=False):
        self.nf = nf
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.iterations = iterations
        self.batch = batch
        self.dropout = dropout
        self.seed = seed
        self.warm_start = warm_start

    def _config(self) -> SegTrainConfig:
        return SegTrainConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
                              iterations=self.iterations, batch=self.batch, dropout=self.dropout,
                              seed=self.seed, nf=self.nf).validate()

    def fit(self, X, y):
        cfg = self._config()
        X = list(X)
        size = check_image(X[0]).shape[0] if X else 0
        if not (self.warm_start and hasattr(self, "net_")):
            self.net_ = build_segnet(cfg, size)
            self.n_fits_ = 0
            self.loss_curve_ = []
        self.net_.dropout = cfg.dropout
        self.loss_curve_ += train_segnet(self.net_, list(zip(X, y)), cfg, stage=self.n_fits_)
        self.n_fits_ += 1
        self.classes_ = np.arange(N_CLASSES)
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("SegNetSegmenter is not fitted yet")

    def predict(self, X):
        self._check_fitted()
        return [predict(self.net_, img) for img in X]

    def predict_proba(self, X):
        self._check_fitted()
        return [predict_proba(self.net_, img) for img in X]

    def score(self, X, y, sample_weight=None):
        cm = confusion_matrix(zip(y, self.predict(X)))
        return mean_iou(cm).mean_iou


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentScheme:
    id: str
    train: str
    test: str
    finetune: str | None = None

    def refs(self) -> list[DatasetRef]:
        out = [DatasetRef.parse(self.train), DatasetRef.parse(self.test)]
        if self.finetune is not None:
            out.append(DatasetRef.parse(self.finetune))
        return out


SCHEME_IDS = tuple("ABCDEFG")
NEEDS_FINETUNE = ("D", "G")

PAPER_SCHEMES = {
    "A": ExperimentScheme("A", "empirical[1-30]", "empirical[41-50]"),
    "B": ExperimentScheme("B", "synthetic[1-8750]", "synthetic[8851-8900]"),
    "C": ExperimentScheme("C", "synthetic[1-8750]", "empirical[41-50]"),
    "D": ExperimentScheme("D", "synthetic[1-8750]", "empirical[41-50]", "empirical[1-30]"),
    "E": ExperimentScheme("E", "translated[1-8750]", "translated[8851-8900]"),
    "F": ExperimentScheme("F", "translated[1-8750]", "empirical[41-50]"),
    "G": ExperimentScheme("G", "translated[1-8750]", "empirical[41-50]", "empirical[1-30]"),
}

# same protocol scaled to 100-image toy sets
TOY_SCHEMES = {
    "A": ExperimentScheme("A", "empirical[1-30]", "empirical[41-50]"),
    "B": ExperimentScheme("B", "synthetic[1-80]", "synthetic[81-100]"),
    "C": ExperimentScheme("C", "synthetic[1-80]", "empirical[41-50]"),
    "D": ExperimentScheme("D", "synthetic[1-80]", "empirical[41-50]", "empirical[1-30]"),
    "E": ExperimentScheme("E", "translated[1-80]", "translated[81-100]"),
    "F": ExperimentScheme("F", "translated[1-80]", "empirical[41-50]"),
    "G": ExperimentScheme("G", "translated[1-80]", "empirical[41-50]", "empirical[1-30]"),
}


def get_scheme(scheme_id: str, table: Mapping[str, ExperimentScheme] = TOY_SCHEMES) -> ExperimentScheme:
    if scheme_id not in SCHEME_IDS or scheme_id not in table:
        raise ConfigError(f"unknown scheme {scheme_id}")
    scheme = table[scheme_id]
    if scheme_id in NEEDS_FINETUNE and scheme.finetune is None:
        raise ConfigError(f"scheme {scheme_id} requires a fine-tune set")
    return scheme


def check_scheme(scheme: ExperimentScheme, roots: Mapping[str, Path]) -> None:
    """Resolve every referenced set up front so errors surface before training."""
    if scheme.id not in SCHEME_IDS:
        raise ConfigError(f"unknown scheme {scheme.id}")
    if scheme.id in NEEDS_FINETUNE and scheme.finetune is None:
        raise ConfigError(f"scheme {scheme.id} requires a fine-tune set")
    for ref in scheme.refs():
        Dataset.from_ref(ref, roots)


@dataclass
class ExperimentResult:
    scheme: str
    seed: int
    report: IouReport
    train_iterations: int
    finetune_iterations: int
    wall_time: float = field(default=0.0, compare=False)


def run_experiment(scheme: ExperimentScheme | str, cfg: SegTrainConfig, seed: int,
                   roots: Mapping[str, Path], cache: dict | None = None) -> ExperimentResult:
    """Train, optionally fine-tune, and score one scheme.

    ``cache`` maps ``(train set, seed)`` to a bootstrapped state dict, so schemes
    sharing a training set (B/C/D and E/F/G) train it once.
    """
    if isinstance(scheme, str):
        scheme = get_scheme(scheme)
    check_scheme(scheme, roots)
    cfg = replace(cfg, seed=seed).validate()
    start = time.perf_counter()
    train = Dataset.from_ref(scheme.train, roots)
    test = Dataset.from_ref(scheme.test, roots)
    size = train.images()[0].shape[0] if len(train) else 0

    net = build_segnet(cfg, size)
    key = (scheme.train, seed)
    if cache is not None and key in cache:
        net.load_state_dict(cache[key])
    else:
        train_segnet(net, train, cfg, stage=0)
        if cache is not None:
            cache[key] = net.state_dict()

    ft_iters = 0
    if scheme.finetune is not None:
        ft_iters = cfg.finetune_iterations
        train_segnet(net, Dataset.from_ref(scheme.finetune, roots), cfg, iterations=ft_iters, stage=1)

    _, report = evaluate(net, test)
    wall = time.perf_counter() - start
    log.info("scheme %s seed %d: mean IOU %.4f (%.1fs)", scheme.id, seed, report.mean_iou, wall)
    return ExperimentResult(scheme.id, seed, report, cfg.iterations, ft_iters, wall)


RESULT_COLUMNS = ("scheme", "seed", "mean_iou", *CLASS_NAMES)


@dataclass
class ResultsTable:
    results: list[ExperimentResult]

    def get(self, scheme: str, seed: int) -> ExperimentResult:
        for r in self.results:
            if r.scheme == scheme and r.seed == seed:
                return r
        raise KeyError((scheme, seed))

    def scheme_mean(self, scheme: str) -> float:
        return float(np.mean([r.report.mean_iou for r in self.results if r.scheme == scheme]))

    def to_csv(self) -> str:
        """One row per (scheme, seed), then one ``mean`` row per scheme."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        fmt = lambda v: "absent" if v is None else repr(float(v))  # noqa: E731
        for r in self.results:
            w.writerow([r.scheme, r.seed, fmt(r.report.mean_iou), *[fmt(v) for v in r.report.per_class]])
        for sid in sorted({r.scheme for r in self.results}):
            rows = [r for r in self.results if r.scheme == sid]
            per_class = []
            for k in range(N_CLASSES):
                vals = [r.report.per_class[k] for r in rows if r.report.per_class[k] is not None]
                per_class.append(float(np.mean(vals)) if vals else None)
            w.writerow([sid, "mean", fmt(self.scheme_mean(sid)), *[fmt(v) for v in per_class]])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def run_all(schemes: Sequence[str] | None, seeds: Sequence[int], cfg: SegTrainConfig,
            roots: Mapping[str, Path], table: Mapping[str, ExperimentScheme] = TOY_SCHEMES,
            workers: int | None = None) -> ResultsTable:
    """Every scheme for every seed.  Seeds run in parallel; within a seed the
    schemes run in order so bootstrapped networks are shared."""
    ids = list(schemes) if schemes else list(SCHEME_IDS)
    resolved = [get_scheme(s, table) for s in ids]
    for s in resolved:
        check_scheme(s, roots)

    def job(seed):
        cache: dict = {}
        return [run_experiment(s, cfg, seed, roots, cache) for s in resolved]

    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        per_seed = list(pool.map(job, seeds))
    ordered = sorted((r for rs in per_seed for r in rs), key=lambda r: (r.scheme, r.seed))
    return ResultsTable(ordered)


def save_segnet(net: SegNet, path) -> None:
    state = net.state_dict()
    state["meta.shape"] = np.array([net.nf, net.image_size, net.n_classes], dtype=np.float64)
    state["meta.dropout"] = np.array([net.dropout])
    save_checkpoint(path, state)


def load_segnet(path) -> SegNet:
    state = load_checkpoint(path)
    nf, size, n_classes = (int(v) for v in state.pop("meta.shape"))
    dropout = float(state.pop("meta.dropout")[0])
    net = SegNet(nf, None, dropout, size, n_classes)
    net.load_state_dict(state)
    return net
