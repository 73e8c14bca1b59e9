"""Directory-of-images datasets.

Layout::

    <set>/rgb/0001.png     8-bit RGB image
    <set>/label/0001.png   8-bit single-channel label map (raw value = class id)

Indices are 1-based and zero-padded to four digits.  Subsets are addressed with
an inclusive range, e.g. ``empirical[1-30]``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .exceptions import ConfigError, DatasetError
from .imgproc import load_image, load_labels, save_image, save_labels

_REF = re.compile(r"^\s*([A-Za-z_][\w\-]*)\s*(?:\[\s*(\d+)\s*-\s*(\d+)\s*\])?\s*$")
MANIFEST = "manifest.json"


def index_name(i: int) -> str:
    return f"{i:04d}.png"


@dataclass(frozen=True)
class DatasetRef:
    """A named set plus an optional inclusive 1-based index range."""

    name: str
    start: int | None = None
    stop: int | None = None

    @classmethod
    def parse(cls, text: str) -> "DatasetRef":
        m = _REF.match(text)
        if not m:
            raise ConfigError(f"cannot parse dataset reference {text!r}; expected name[a-b]")
        name, a, b = m.groups()
        if a is None:
            return cls(name)
        a, b = int(a), int(b)
        if a < 1 or b < a:
            raise ConfigError(f"invalid index range in {text!r}")
        return cls(name, a, b)

    def __str__(self) -> str:
        if self.start is None:
            return self.name
        return f"{self.name}[{self.start}-{self.stop}]"

    def indices(self, available: list[int]) -> list[int]:
        if self.start is None:
            return list(available)
        wanted = list(range(self.start, self.stop + 1))
        missing = sorted(set(wanted) - set(available))
        if missing:
            raise DatasetError(f"{self}: missing indices {missing[:5]}{'...' if len(missing) > 5 else ''}")
        return wanted


def available_indices(root: Path) -> list[int]:
    rgb = Path(root) / "rgb"
    if not rgb.is_dir():
        raise DatasetError(f"dataset {root} has no rgb/ directory")
    out = []
    for p in rgb.glob("*.png"):
        if p.stem.isdigit():
            out.append(int(p.stem))
    return sorted(out)


class Dataset:
    """Lazy view over an on-disk set restricted to a list of indices."""

    def __init__(self, root, indices: list[int] | None = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DatasetError(f"dataset directory {self.root} does not exist")
        avail = available_indices(self.root)
        if indices is None:
            indices = avail
        else:
            missing = sorted(set(indices) - set(avail))
            if missing:
                raise DatasetError(f"{self.root}: missing image indices {missing[:5]}")
        self.indices = list(indices)

    @classmethod
    def from_ref(cls, ref: DatasetRef | str, roots: Mapping[str, Path]) -> "Dataset":
        if isinstance(ref, str):
            ref = DatasetRef.parse(ref)
        if ref.name not in roots:
            raise ConfigError(f"unknown dataset {ref.name!r}; known: {sorted(roots)}")
        root = Path(roots[ref.name])
        if not root.is_dir():
            raise DatasetError(f"dataset directory {root} does not exist")
        return cls(root, ref.indices(available_indices(root)))

    def __len__(self) -> int:
        return len(self.indices)

    def image_path(self, i: int) -> Path:
        return self.root / "rgb" / index_name(i)

    def label_path(self, i: int) -> Path:
        return self.root / "label" / index_name(i)

    def images(self) -> list[np.ndarray]:
        return [load_image(self.image_path(i)) for i in self.indices]

    def labels(self) -> list[np.ndarray]:
        out = []
        for i in self.indices:
            path = self.label_path(i)
            if not path.is_file():
                raise DatasetError(f"missing label map {path}")
            out.append(load_labels(path))
        return out

    def pairs(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for i in self.indices:
            path = self.label_path(i)
            if not path.is_file():
                raise DatasetError(f"missing label map {path}")
            yield load_image(self.image_path(i)), load_labels(path)

    def head(self, n: int) -> "Dataset":
        if n > len(self.indices):
            raise DatasetError(f"{self.root} holds {len(self.indices)} images, {n} requested")
        return Dataset(self.root, self.indices[:n])


def write_pair(root, index: int, image: np.ndarray, labels: np.ndarray | None) -> None:
    root = Path(root)
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    save_image(root / "rgb" / index_name(index), image)
    if labels is not None:
        (root / "label").mkdir(parents=True, exist_ok=True)
        save_labels(root / "label" / index_name(index), labels)


def write_manifest(root, payload: dict) -> None:
    Path(root).mkdir(parents=True, exist_ok=True)
    (Path(root) / MANIFEST).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
