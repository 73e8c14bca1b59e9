"""JSON configuration shared by the command-line front end.

A complete file, with every key at its default::

    {
      "seeds": [0, 1, 2],              // translator / segmentation seeds; default: --seed + 0, 1, 2
      "toydata": {
        "n": 100,                      // images per domain
        "image_size": 64,
        "hue_jitter": 4.0,             // degrees, per object
        "noise_amplitude": 0.08,       // textured style only
        "noise_scale": 1,              // textured style only; noise grain in pixels
        "illumination": [0.75, 1.25]   // textured style only
      },
      "gap": {
        "n_images": 10,                // images per set entering the report
        "levels": 64,                  // GLCM gray levels
        "hue_mode": "pooled"           // or "mean" (average of per-image histograms)
      },
      "translator": {                  // see TranslatorConfig
        "nf": 16, "n_res_blocks": 2, "n_disc_layers": 3, "iterations": 2000,
        "lr": 0.0002, "beta1": 0.5, "beta2": 0.999,
        "lambda_cycle_xy": 10.0, "lambda_cycle_yx": 10.0, "lambda_identity": 0.0,
        "pool_size": 0, "image_size": 64, "batch_size": 1, "checkpoint_every": 0
      },
      "segnet": {                      // see SegTrainConfig
        "nf": 16, "iterations": 600, "batch": 4, "dropout": 0.5,
        "lr": 0.001, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
        "finetune_fraction": 0.25
      },
      "schemes": "ABCDEFG",
      "datasets": {"synthetic": "data/synthetic", "empirical": "data/empirical"}
    }

Comments are shown for documentation only; the file itself must be plain JSON.
Seeds inside ``translator`` and ``segnet`` are ignored; they come from
``seeds`` / ``--seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .cyclegan import TranslatorConfig
from .exceptions import ConfigError
from .segnet import SCHEME_IDS, SegTrainConfig
from .toydata import ToySceneSpec

_TOP_KEYS = {"seeds", "toydata", "gap", "translator", "segnet", "schemes", "datasets"}


@dataclass
class GapConfig:
    n_images: int = 10
    levels: int = 64
    hue_mode: str = "pooled"

    def validate(self) -> "GapConfig":
        if self.n_images < 1:
            raise ConfigError("gap.n_images must be positive")
        if self.levels < 2:
            raise ConfigError("gap.levels must be at least 2")
        if self.hue_mode not in ("pooled", "mean"):
            raise ConfigError(f"gap.hue_mode must be 'pooled' or 'mean', not {self.hue_mode!r}")
        return self


@dataclass
class ToyDataConfig:
    n: int = 100
    image_size: int = 64
    hue_jitter: float = 4.0
    noise_amplitude: float = 0.08
    noise_scale: int = 1
    illumination: tuple = (0.75, 1.25)

    def validate(self) -> "ToyDataConfig":
        if self.n < 1:
            raise ConfigError("toydata.n must be positive")
        self.spec(0, "X_clean")
        return self

    def spec(self, seed: int, style: str) -> ToySceneSpec:
        return ToySceneSpec(seed=seed, image_size=self.image_size, style=style, hue_jitter=self.hue_jitter,
                            noise_amplitude=self.noise_amplitude, noise_scale=self.noise_scale,
                            illumination=tuple(self.illumination)).validate()


@dataclass
class RunConfig:
    seeds: list[int] | None = None
    toydata: ToyDataConfig = field(default_factory=ToyDataConfig)
    gap: GapConfig = field(default_factory=GapConfig)
    translator: TranslatorConfig = field(default_factory=TranslatorConfig)
    segnet: SegTrainConfig = field(default_factory=SegTrainConfig)
    schemes: str = "ABCDEFG"
    datasets: dict[str, str] = field(default_factory=dict)

    def resolved_seeds(self, base: int) -> list[int]:
        return list(self.seeds) if self.seeds is not None else [base, base + 1, base + 2]

    def validate(self) -> "RunConfig":
        self.toydata.validate()
        self.gap.validate()
        self.translator.validate()
        self.segnet.validate()
        bad = [s for s in self.schemes if s not in SCHEME_IDS]
        if bad or not self.schemes:
            raise ConfigError(f"unknown scheme {''.join(bad) or '(none)'}")
        if self.seeds is not None and (not self.seeds or any(not isinstance(s, int) for s in self.seeds)):
            raise ConfigError("seeds must be a non-empty list of integers")
        if self.translator.image_size != self.toydata.image_size:
            raise ConfigError("translator.image_size must equal toydata.image_size")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                seeds=data.get("seeds"),
                toydata=_section(ToyDataConfig, data.get("toydata", {}), "toydata"),
                gap=_section(GapConfig, data.get("gap", {}), "gap"),
                translator=_section(TranslatorConfig, data.get("translator", {}), "translator"),
                segnet=_section(SegTrainConfig, data.get("segnet", {}), "segnet"),
                schemes=data.get("schemes", "ABCDEFG"),
                datasets=dict(data.get("datasets", {})),
            ).validate()
        except TypeError as e:
            raise ConfigError(f"invalid config value: {e}") from e

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "toydata": {f.name: getattr(self.toydata, f.name) for f in fields(ToyDataConfig)},
            "gap": {f.name: getattr(self.gap, f.name) for f in fields(GapConfig)},
            "translator": self.translator.to_dict(),
            "segnet": self.segnet.to_dict(),
            "schemes": self.schemes,
            "datasets": dict(self.datasets),
        }


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return cls(**data)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {p} is not valid JSON: {e.msg} (line {e.lineno})") from e
    return RunConfig.from_dict(data)
