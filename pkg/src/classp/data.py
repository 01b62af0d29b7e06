"""Datasets, IDX loading and continual-learning task sequences."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError
from .numeric import Pcg32

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y).astype(np.int64).ravel()
        if x.ndim != 2:
            raise ValueError(f"x must be 2-D, got shape {x.shape}")
        if len(y) != x.shape[0]:
            raise ValueError(f"{len(y)} labels for {x.shape[0]} examples")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def features(self) -> int:
        return self.x.shape[1]

    def renamed(self, name: str) -> "Dataset":
        return replace(self, name=name)


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise FormatError(f"{path}: corrupt gzip stream ({e})") from None
    return raw


def _parse_idx(raw: bytes, path, magic: int):
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    body = raw[header:]
    if len(body) != size:
        raise FormatError(f"{path}: expected {size} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, name: str = "", num_classes: int = 10) -> Dataset:
    """Load an IDX image/label pair (optionally gzipped) scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), images_path, IDX_IMAGES_MAGIC)
    labels = _parse_idx(_read_bytes(labels_path), labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= num_classes:
        raise FormatError(f"{labels_path}: label {labels.max()} outside [0, {num_classes})")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels, num_classes, name or Path(images_path).name)


def write_idx(images, labels, images_path, labels_path, compress: bool = False) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    opener = (lambda p: gzip.GzipFile(p, "wb", mtime=0)) if compress else (lambda p: open(p, "wb"))
    with opener(images_path) as f:
        f.write(struct.pack(">I3I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with opener(labels_path) as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def split_classes(d: Dataset, classes, name: Optional[str] = None) -> Dataset:
    """Keep examples whose label is in ``classes``; labels are not remapped."""
    classes = sorted({int(c) for c in classes})
    if not classes:
        raise ValueError("class subset must be non-empty")
    if classes[0] < 0 or classes[-1] >= d.num_classes:
        raise ValueError(f"classes must lie in [0, {d.num_classes})")
    mask = np.isin(d.y, classes)
    if not mask.any():
        raise ValueError(f"no examples with labels {classes} in {d.name!r}")
    return Dataset(d.x[mask], d.y[mask], d.num_classes, d.name if name is None else name)


def permute_features(d: Dataset, perm=None, rng: Optional[Pcg32] = None, name: Optional[str] = None) -> Dataset:
    """Reorder columns so output column j is input column perm[j]."""
    if perm is None:
        if rng is None:
            raise ValueError("need either a permutation or a generator")
        perm = rng.permutation(d.features)
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (d.features,) or not np.array_equal(np.sort(perm), np.arange(d.features)):
        raise ValueError("perm must be a bijection on the feature indices")
    return Dataset(d.x[:, perm], d.y, d.num_classes, d.name if name is None else name)


def make_blobs(rng: Pcg32, per_class: int, centers, std: float, name: str = "blobs") -> Dataset:
    """Isotropic Gaussian clusters, ``per_class`` points around each center.

    Examples are laid out class by class (all of class 0, then class 1, ...).
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if std < 0:
        raise ValueError("std must be >= 0")
    centers = [np.asarray(c, dtype=np.float64).ravel() for c in centers]
    if not centers:
        raise ValueError("need at least one center")
    dim = centers[0].size
    if any(c.size != dim for c in centers):
        raise ValueError("all centers must have the same dimension")
    k = len(centers)
    noise = rng.standard_normal(per_class * k * dim).reshape(per_class * k, dim)
    x = np.repeat(np.stack(centers), per_class, axis=0) + std * noise
    y = np.repeat(np.arange(k), per_class)
    return Dataset(x, y, k, name)


@dataclass
class Phase:
    dataset: Dataset
    epochs: int = 1
    batch_size: int = 64
    threshold: Optional[float] = None
    apply_decay: Optional[bool] = None
    loss_stop: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.threshold is not None and not self.threshold >= 0:
            raise ValueError("threshold override must be >= 0")


@dataclass
class TaskSequence:
    phases: Sequence[Phase]
    eval_sets: Sequence[Dataset] = field(default_factory=list)

    def __post_init__(self):
        self.phases = list(self.phases)
        if not self.phases:
            raise ValueError("a task sequence needs at least one phase")
        if not self.eval_sets:
            self.eval_sets = [p.dataset.renamed(f"task{i + 1}") for i, p in enumerate(self.phases)]
        self.eval_sets = list(self.eval_sets)
        ref = self.phases[0].dataset
        for d in [p.dataset for p in self.phases] + self.eval_sets:
            if d.features != ref.features or d.num_classes != ref.num_classes:
                raise ValueError("all datasets must share feature size and label space")

    @property
    def features(self) -> int:
        return self.phases[0].dataset.features

    @property
    def num_classes(self) -> int:
        return self.phases[0].dataset.num_classes


def split_task_sequence(d: Dataset, first=range(5), second=range(5, 10), epochs=(4, 1),
                        batch_size: int = 64, overrides=({}, {})) -> TaskSequence:
    """Two-phase class-split sequence, e.g. digits 0-4 then 5-9."""
    a = split_classes(d, first, name="task1")
    b = split_classes(d, second, name="task2")
    phases = [
        Phase(a, epochs[0], batch_size, **overrides[0]),
        Phase(b, epochs[1], batch_size, **overrides[1]),
    ]
    return TaskSequence(phases, [a, b])
