"""Cycle-consistent adversarial translation between two unpaired image domains.

Two generators (``G: X -> Y`` and ``F: Y -> X``) are trained against two patch
discriminators (``D_X``, ``D_Y``) with a least-squares adversarial objective.
An L1 cycle term ties ``F(G(x))`` to ``x`` and ``G(F(y))`` to ``y``, which keeps
geometry in place so the label map of ``x`` stays valid for ``G(x)``.

Images enter the networks scaled from [0, 1] to [-1, 1]; the generators end in
``tanh`` and :func:`translate` maps the result back to [0, 1].
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from ._validation import check_image, check_image_batch, from_nchw, to_nchw
from .autodiff import AdamState, Tensor
from .autodiff.checkpoint import load_checkpoint, save_checkpoint
from .exceptions import ConfigError, NumericError, ShapeError, TrainingError
from .nets import Conv, Network

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iteration", "d_x_loss", "d_y_loss", "adv_xy", "adv_yx", "cyc_xy", "cyc_yx")


@dataclass
class TranslatorConfig:
    """Hyper-parameters of the translator.

    The defaults are the desk-scale toy preset.  :meth:`paper` returns the
    published setting (50 filters, 6 residual blocks).
    """

    nf: int = 16
    n_res_blocks: int = 2
    n_disc_layers: int = 3
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_cycle_xy: float = 10.0
    lambda_cycle_yx: float = 10.0
    lambda_identity: float = 0.0
    pool_size: int = 0
    iterations: int = 2000
    image_size: int = 64
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    pad_mode: str = "reflect"

    @classmethod
    def paper(cls, **overrides) -> "TranslatorConfig":
        return cls(**{"nf": 50, "n_res_blocks": 6, **overrides})

    @classmethod
    def toy(cls, **overrides) -> "TranslatorConfig":
        return cls(**overrides)

    @classmethod
    def micro(cls, **overrides) -> "TranslatorConfig":
        return cls(**{"nf": 2, "n_res_blocks": 1, "n_disc_layers": 2, "image_size": 8, **overrides})

    @classmethod
    def from_dict(cls, data: dict) -> "TranslatorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown translator config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "TranslatorConfig":
        for name in ("nf", "n_res_blocks", "n_disc_layers", "image_size", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.iterations < 0 or self.checkpoint_every < 0 or self.pool_size < 0:
            raise ConfigError("iterations, checkpoint_every and pool_size must be non-negative")
        if self.image_size % 4:
            raise ConfigError(f"image_size {self.image_size} is not divisible by 4")
        for name in ("lr", "lambda_cycle_xy", "lambda_cycle_yx"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite")
        if not (math.isfinite(self.lambda_identity) and self.lambda_identity >= 0):
            raise ConfigError("lambda_identity must be finite and non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        if self.pad_mode not in ("zero", "reflect"):
            raise ConfigError(f"pad_mode must be 'zero' or 'reflect', not {self.pad_mode!r}")
        if self.pad_mode == "reflect" and self.image_size < 8:
            raise ConfigError("reflection padding needs image_size >= 8")
        if disc_grid_size(self.image_size, self.n_disc_layers) < 1:
            raise ConfigError("too many discriminator layers for the image size")
        return self


def disc_grid_size(image_size: int, n_layers: int) -> int:
    s = image_size
    for _ in range(n_layers):
        s = (s + 2 - 4) // 2 + 1
    return s


# ---------------------------------------------------------------------------
# networks


class GeneratorNet(Network):
    """Residual encoder-decoder: 7x7 stem, two stride-2 downsamplings, residual
    blocks, two nearest-upsample + 3x3 stages, 7x7 head with tanh.

    Instance normalisation follows every convolution except the head, so those
    convolutions carry no bias.  The stem, residual and head convolutions pad
    with ``pad_mode``; the resolution-changing stages always zero-pad.
    """

    def __init__(self, nf: int, n_res_blocks: int, rng: np.random.Generator, name: str = "G",
                 pad_mode: str = "reflect"):
        self.nf = nf
        self.n_res_blocks = n_res_blocks
        p = name + "."
        self.stem = Conv(p + "stem", 3, nf, 7, rng, padding=3, bias=False, pad_mode=pad_mode)
        self.down1 = Conv(p + "down1", nf, 2 * nf, 3, rng, stride=2, padding=1, bias=False)
        self.down2 = Conv(p + "down2", 2 * nf, 4 * nf, 3, rng, stride=2, padding=1, bias=False)
        self.blocks = [
            (
                Conv(f"{p}res{i}a", 4 * nf, 4 * nf, 3, rng, padding=1, bias=False, pad_mode=pad_mode),
                Conv(f"{p}res{i}b", 4 * nf, 4 * nf, 3, rng, padding=1, bias=False, pad_mode=pad_mode),
            )
            for i in range(n_res_blocks)
        ]
        self.up1 = Conv(p + "up1", 4 * nf, 2 * nf, 3, rng, padding=1, bias=False)
        self.up2 = Conv(p + "up2", 2 * nf, nf, 3, rng, padding=1, bias=False)
        self.head = Conv(p + "head", nf, 3, 7, rng, padding=3, bias=True, pad_mode=pad_mode)
        self.convs = [self.stem, self.down1, self.down2, *[c for b in self.blocks for c in b],
                      self.up1, self.up2, self.head]

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.relu(ad.instance_norm(self.stem(x)))
        h = ad.relu(ad.instance_norm(self.down1(h)))
        h = ad.relu(ad.instance_norm(self.down2(h)))
        for a, b in self.blocks:
            r = ad.relu(ad.instance_norm(a(h)))
            h = h + ad.instance_norm(b(r))
        h = ad.relu(ad.instance_norm(self.up1(ad.upsample2x(h))))
        h = ad.relu(ad.instance_norm(self.up2(ad.upsample2x(h))))
        return ad.tanh(self.head(h))


class DiscriminatorNet(Network):
    """Patch discriminator: ``n_layers`` 4x4 stride-2 convolutions with leaky ReLU
    (instance norm after all but the first), then a 3x3 convolution to one
    score channel.  The output is a grid of scores, one per receptive patch.
    """

    def __init__(self, nf: int, rng: np.random.Generator, n_layers: int = 3, name: str = "D"):
        p = name + "."
        self.layers = [Conv(p + "conv0", 3, nf, 4, rng, stride=2, padding=1, bias=True)]
        ch = nf
        for i in range(1, n_layers):
            self.layers.append(Conv(f"{p}conv{i}", ch, 2 * ch, 4, rng, stride=2, padding=1, bias=False))
            ch *= 2
        self.head = Conv(p + "head", ch, 1, 3, rng, padding=1, bias=True)
        self.convs = [*self.layers, self.head]

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.leaky_relu(self.layers[0](x), 0.2)
        for conv in self.layers[1:]:
            h = ad.leaky_relu(ad.instance_norm(conv(h)), 0.2)
        return self.head(h)


@contextmanager
def frozen(*nets: Network):
    """Temporarily stop tracking gradients for the parameters of ``nets``."""
    params = [p for n in nets for p in n.parameters()]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


class ImagePool:
    """Replay buffer of past generated images; ``size == 0`` disables it."""

    def __init__(self, size: int):
        self.size = size
        self.images: list[np.ndarray] = []

    def query(self, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            return batch
        out = []
        for img in batch:
            if len(self.images) < self.size:
                self.images.append(img.copy())
                out.append(img)
            elif rng.random() < 0.5:
                k = int(rng.integers(self.size))
                out.append(self.images[k])
                self.images[k] = img.copy()
            else:
                out.append(img)
        return np.stack(out)


@dataclass
class TranslatorPair:
    cfg: TranslatorConfig
    G: GeneratorNet
    F: GeneratorNet
    d_x: DiscriminatorNet
    d_y: DiscriminatorNet
    opt_gen: AdamState
    opt_disc: AdamState
    iteration: int = 0
    history: list[dict] = field(default_factory=list)
    pool_x: ImagePool | None = None
    pool_y: ImagePool | None = None

    @property
    def generator_params(self) -> list[Tensor]:
        return self.G.parameters() + self.F.parameters()

    @property
    def discriminator_params(self) -> list[Tensor]:
        return self.d_x.parameters() + self.d_y.parameters()

    def n_params(self) -> dict[str, int]:
        return {
            "G": self.G.n_params(),
            "F": self.F.n_params(),
            "D_X": self.d_x.n_params(),
            "D_Y": self.d_y.n_params(),
        }

    def summary(self) -> str:
        parts = []
        for label, net in (("G: X->Y", self.G), ("F: Y->X", self.F), ("D_X", self.d_x), ("D_Y", self.d_y)):
            parts.append(f"[{label}]\n{net.summary_text()}")
        parts.append(f"total parameters: {sum(self.n_params().values())}")
        return "\n\n".join(parts)

    # -- persistence -----------------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for net in (self.G, self.F, self.d_x, self.d_y):
            out.update(net.state_dict())
        for tag, opt, params in (
            ("gen", self.opt_gen, self.generator_params),
            ("disc", self.opt_disc, self.discriminator_params),
        ):
            out[f"adam.{tag}.step"] = np.array(float(opt.step_count))
            if opt.m:
                for p, m, v in zip(params, opt.m, opt.v):
                    out[f"adam.{tag}.m.{p.name}"] = m
                    out[f"adam.{tag}.v.{p.name}"] = v
        out["iteration"] = np.array(float(self.iteration))
        return out

    def save(self, path) -> None:
        save_checkpoint(path, self.state())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for net in (self.G, self.F, self.d_x, self.d_y):
            net.load_state_dict(state)
        for tag, opt, params in (
            ("gen", self.opt_gen, self.generator_params),
            ("disc", self.opt_disc, self.discriminator_params),
        ):
            opt.step_count = int(state[f"adam.{tag}.step"])
            if f"adam.{tag}.m.{params[0].name}" in state:
                opt.m = [state[f"adam.{tag}.m.{p.name}"].copy() for p in params]
                opt.v = [state[f"adam.{tag}.v.{p.name}"].copy() for p in params]
            else:
                opt.m, opt.v = [], []
        self.iteration = int(state["iteration"])

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in self.history:
            w.writerow([rec["iteration"], *[repr(rec[k]) for k in HISTORY_COLUMNS[1:]]])
        return buf.getvalue()


def build_translator(cfg: TranslatorConfig) -> TranslatorPair:
    """Initialise all four networks deterministically from ``cfg.seed``."""
    cfg.validate()
    rngs = [np.random.default_rng([cfg.seed, k]) for k in range(4)]
    G = GeneratorNet(cfg.nf, cfg.n_res_blocks, rngs[0], "G", cfg.pad_mode)
    F = GeneratorNet(cfg.nf, cfg.n_res_blocks, rngs[1], "F", cfg.pad_mode)
    d_x = DiscriminatorNet(cfg.nf, rngs[2], cfg.n_disc_layers, "D_X")
    d_y = DiscriminatorNet(cfg.nf, rngs[3], cfg.n_disc_layers, "D_Y")
    opt = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=1e-8)
    return TranslatorPair(
        cfg, G, F, d_x, d_y, AdamState(**opt), AdamState(**opt),
        pool_x=ImagePool(cfg.pool_size), pool_y=ImagePool(cfg.pool_size),
    )


def load_translator(path, cfg: TranslatorConfig) -> TranslatorPair:
    pair = build_translator(cfg)
    pair.load_state(load_checkpoint(path))
    return pair


# ---------------------------------------------------------------------------
# losses


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Least-squares objective: real patches pushed to 1, generated ones to 0."""
    if d_real.shape != d_fake.shape:
        raise ShapeError("real and fake score maps differ in shape")
    real_term = ad.mean(ad.square(ad.add_scalar(d_real, -1.0)))
    fake_term = ad.mean(ad.square(d_fake))
    return ad.scale(real_term + fake_term, 0.5)


def adversarial_loss(d_fake: Tensor) -> Tensor:
    """Generator side of the least-squares objective: ``mean((D(G(x)) - 1)^2)``."""
    return ad.mean(ad.square(ad.add_scalar(d_fake, -1.0)))


def generator_loss(
    pair: TranslatorPair,
    x: Tensor,
    y: Tensor,
    cfg: TranslatorConfig | None = None,
    fakes: tuple[Tensor, Tensor] | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Total generator objective and its unweighted components.

    ``fakes`` may carry already computed ``(G(x), F(y))`` to avoid a second
    forward pass.
    """
    cfg = cfg or pair.cfg
    if x.shape != y.shape:
        raise ShapeError(f"domain batches differ in shape: {x.shape} vs {y.shape}")
    fake_y, fake_x = fakes if fakes is not None else (pair.G(x), pair.F(y))
    adv_xy = adversarial_loss(pair.d_y(fake_y))
    adv_yx = adversarial_loss(pair.d_x(fake_x))
    cyc_xy = ad.l1_loss(pair.F(fake_y), x)
    cyc_yx = ad.l1_loss(pair.G(fake_x), y)
    total = adv_xy + adv_yx + ad.scale(cyc_xy, cfg.lambda_cycle_xy) + ad.scale(cyc_yx, cfg.lambda_cycle_yx)
    parts = {
        "adv_xy": adv_xy.item(),
        "adv_yx": adv_yx.item(),
        "cyc_xy": cyc_xy.item(),
        "cyc_yx": cyc_yx.item(),
    }
    if cfg.lambda_identity > 0:
        idt_y = ad.l1_loss(pair.G(y), y)
        idt_x = ad.l1_loss(pair.F(x), x)
        total = total + ad.scale(idt_y, cfg.lambda_identity * cfg.lambda_cycle_yx)
        total = total + ad.scale(idt_x, cfg.lambda_identity * cfg.lambda_cycle_xy)
        parts["idt_x"] = idt_x.item()
        parts["idt_y"] = idt_y.item()
    parts["total"] = total.item()
    return total, parts


# ---------------------------------------------------------------------------
# training


def _prepare(images: Sequence[np.ndarray], size: int, what: str) -> np.ndarray:
    if len(images) == 0:
        raise ValueError(f"{what} is empty")
    batch = check_image_batch(images, what)
    if batch[0].shape[:2] != (size, size):
        raise ShapeError(f"{what} images are {batch[0].shape[:2]}, translator expects {size}x{size}")
    return to_nchw(batch) * 2.0 - 1.0


def train_step(pair: TranslatorPair, xb: np.ndarray, yb: np.ndarray, rng: np.random.Generator) -> dict:
    """One alternating update: both discriminators, then both generators."""
    x, y = Tensor(xb), Tensor(yb)
    with frozen(pair.d_x, pair.d_y):
        fake_y = pair.G(x)
        fake_x = pair.F(y)

    # discriminators see detached fakes, so no gradient reaches G or F
    pair.d_x.zero_grad()
    pair.d_y.zero_grad()
    fy = Tensor(pair.pool_y.query(fake_y.data, rng)) if pair.pool_y else fake_y.detach()
    fx = Tensor(pair.pool_x.query(fake_x.data, rng)) if pair.pool_x else fake_x.detach()
    d_y_loss = discriminator_loss(pair.d_y(y), pair.d_y(fy))
    d_x_loss = discriminator_loss(pair.d_x(x), pair.d_x(fx))
    ad.backward(d_x_loss + d_y_loss)
    _check_finite(pair.iteration, {"d_x_loss": d_x_loss.item(), "d_y_loss": d_y_loss.item()})
    ad.adam_step(pair.discriminator_params, pair.opt_disc)

    pair.G.zero_grad()
    pair.F.zero_grad()
    with frozen(pair.d_x, pair.d_y):
        loss, parts = generator_loss(pair, x, y, fakes=(fake_y, fake_x))
        _check_finite(pair.iteration, parts)
        ad.backward(loss)
    ad.adam_step(pair.generator_params, pair.opt_gen)

    rec = {
        "iteration": pair.iteration,
        "d_x_loss": d_x_loss.item(),
        "d_y_loss": d_y_loss.item(),
        **{k: parts[k] for k in ("adv_xy", "adv_yx", "cyc_xy", "cyc_yx")},
    }
    pair.history.append(rec)
    pair.iteration += 1
    return rec


def _check_finite(iteration: int, parts: dict[str, float]) -> None:
    if not all(math.isfinite(v) for v in parts.values()):
        detail = ", ".join(f"{k}={v!r}" for k, v in parts.items())
        raise TrainingError(f"non-finite loss at iteration {iteration}: {detail}")


def train_translator(
    pair: TranslatorPair,
    dataset_x: Sequence[np.ndarray],
    dataset_y: Sequence[np.ndarray],
    cfg: TranslatorConfig | None = None,
    checkpoint_dir=None,
    callback: Callable[[TranslatorPair, dict], None] | None = None,
) -> TranslatorPair:
    """Run ``cfg.iterations`` further alternating updates.

    Batches are drawn with an RNG keyed on ``(seed, iteration)``, so training
    resumed from a checkpoint follows the same sequence as an uninterrupted run.
    """
    cfg = (cfg or pair.cfg).validate()
    xs = _prepare(dataset_x, cfg.image_size, "dataset_x")
    ys = _prepare(dataset_y, cfg.image_size, "dataset_y")
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    stop = pair.iteration + cfg.iterations
    while pair.iteration < stop:
        rng = np.random.default_rng([cfg.seed, 0x5EED, pair.iteration])
        ix = rng.integers(len(xs), size=cfg.batch_size)
        iy = rng.integers(len(ys), size=cfg.batch_size)
        try:
            rec = train_step(pair, xs[ix], ys[iy], rng)
        except NumericError as e:
            last = pair.history[-1] if pair.history else {}
            detail = ", ".join(f"{k}={last[k]!r}" for k in HISTORY_COLUMNS[1:] if k in last) or "none recorded"
            raise TrainingError(f"non-finite values at iteration {pair.iteration} ({e}); "
                                f"previous losses: {detail}") from e
        if callback is not None:
            callback(pair, rec)
        if pair.iteration % 100 == 0:
            log.info("iter %d  d_x %.4f d_y %.4f adv %.4f/%.4f cyc %.4f/%.4f", pair.iteration,
                     rec["d_x_loss"], rec["d_y_loss"], rec["adv_xy"], rec["adv_yx"], rec["cyc_xy"], rec["cyc_yx"])
        if ckpt is not None and cfg.checkpoint_every and pair.iteration % cfg.checkpoint_every == 0:
            pair.save(ckpt / f"translator_{pair.iteration:06d}.dgck")
    return pair


def translate_batch(pair: TranslatorPair, images: Sequence[np.ndarray], direction: str = "x_to_y") -> list[np.ndarray]:
    if direction not in ("x_to_y", "y_to_x"):
        raise ValueError("direction must be 'x_to_y' or 'y_to_x'")
    net = pair.G if direction == "x_to_y" else pair.F
    batch = _prepare(images, pair.cfg.image_size, "images")
    out = []
    with ad.no_grad():
        for i in range(len(batch)):
            res = net(Tensor(batch[i : i + 1])).data
            out.extend(from_nchw(np.clip((res + 1.0) * 0.5, 0.0, 1.0)))
    return out


def translate(pair: TranslatorPair, image: np.ndarray, direction: str = "x_to_y") -> np.ndarray:
    """Apply ``G`` (``x_to_y``) or ``F`` (``y_to_x``) to one [0, 1] image.

    The output has the input's size; pair it with the input's original label map.
    """
    check_image(image)
    return translate_batch(pair, [image], direction)[0]


# ---------------------------------------------------------------------------
# estimator


class CycleGANTranslator(TransformerMixin, BaseEstimator):
    """Estimator front end: ``fit(X, Y)`` on two unpaired image collections,
    ``transform`` maps X-domain images to Y, ``inverse_transform`` the reverse.

    Unlike a supervised estimator, ``Y`` here is the set of target-domain
    images, not per-sample targets; it may differ in length from ``X``.
    """

    def __init__(
        self,
        nf=16,
        n_res_blocks=2,
        n_disc_layers=3,
        lr=0.0002,
        beta1=0.5,
        beta2=0.999,
        lambda_cycle_xy=10.0,
        lambda_cycle_yx=10.0,
        lambda_identity=0.0,
        pool_size=0,
        iterations=2000,
        image_size=64,
        batch_size=1,
        seed=0,
        checkpoint_every=0,
        pad_mode="reflect",
        warm_start=False,
    ):
        self.nf = nf
        self.n_res_blocks = n_res_blocks
        self.n_disc_layers = n_disc_layers
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.lambda_cycle_xy = lambda_cycle_xy
        self.lambda_cycle_yx = lambda_cycle_yx
        self.lambda_identity = lambda_identity
        self.pool_size = pool_size
        self.iterations = iterations
        self.image_size = image_size
        self.batch_size = batch_size
        self.seed = seed
        self.checkpoint_every = checkpoint_every
        self.pad_mode = pad_mode
        self.warm_start = warm_start

    def _config(self) -> TranslatorConfig:
        params = {f.name: getattr(self, f.name) for f in fields(TranslatorConfig)}
        return TranslatorConfig(**params).validate()

    def fit(self, X, Y, checkpoint_dir=None):
        cfg = self._config()
        if not (self.warm_start and hasattr(self, "pair_")):
            self.pair_ = build_translator(cfg)
        self.pair_.cfg = cfg
        train_translator(self.pair_, X, Y, cfg, checkpoint_dir=checkpoint_dir)
        self.n_iter_ = self.pair_.iteration
        return self

    def _check_fitted(self):
        if not hasattr(self, "pair_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("CycleGANTranslator is not fitted yet")

    def transform(self, X):
        self._check_fitted()
        return translate_batch(self.pair_, X, "x_to_y")

    def inverse_transform(self, Y):
        self._check_fitted()
        return translate_batch(self.pair_, Y, "y_to_x")

    @property
    def loss_history_(self) -> list[dict]:
        self._check_fitted()
        return self.pair_.history

    def save(self, directory) -> None:
        """Write ``translator.dgck``, ``translator_config.json`` and ``loss_history.csv``."""
        self._check_fitted()
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.pair_.save(d / "translator.dgck")
        (d / "translator_config.json").write_text(json.dumps(self.pair_.cfg.to_dict(), indent=2) + "\n")
        (d / "loss_history.csv").write_text(self.pair_.history_csv())

    @classmethod
    def load(cls, directory) -> "CycleGANTranslator":
        d = Path(directory)
        cfg = TranslatorConfig.from_dict(json.loads((d / "translator_config.json").read_text()))
        est = cls(**cfg.to_dict())
        est.pair_ = load_translator(d / "translator.dgck", cfg)
        hist = d / "loss_history.csv"
        if hist.is_file():
            rows = list(csv.DictReader(io.StringIO(hist.read_text())))
            est.pair_.history = [
                {k: (int(v) if k == "iteration" else float(v)) for k, v in r.items()} for r in rows
            ]
        est.n_iter_ = est.pair_.iteration
        return est
