"""Synthetic long-tailed classification datasets.

Class-count profiles decay exponentially from a head-class count down to
``n_max / imbalance_factor`` at the tail, which reproduces the training-set
sizes of the usual long-tailed image benchmarks (e.g. 10 classes, head 5000,
IF=100 gives ~12.4k samples). The data itself is Gaussian clusters: one
isotropic blob per class, with the head/tail geometry controlled by the
ratio of center scale to cluster spread. Test splits are always balanced.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ClassCounts",
    "SynthSpec",
    "Dataset",
    "make_class_counts",
    "lambda_vector",
    "synth_dataset",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class ClassCounts:
    """Per-class training sample counts, sorted non-increasing.

    ``counts[j]`` is the number of training samples of class ``j``; class 0
    is the head (most frequent) class and class ``C-1`` the tail.
    """

    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) < 1:
            raise ValueError("counts must be non-empty")
        if any(int(n) != n or n < 1 for n in self.counts):
            raise ValueError(f"all class counts must be integers >= 1, got {self.counts}")
        if any(a < b for a, b in zip(self.counts, self.counts[1:])):
            raise ValueError(f"counts must be non-increasing, got {self.counts}")
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def n_max(self) -> int:
        return self.counts[0]

    @property
    def n_min(self) -> int:
        return self.counts[-1]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def imbalance_factor(self) -> float:
        """Ratio of the largest to the smallest class size."""
        return self.counts[0] / self.counts[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.float64)


@dataclass(frozen=True)
class SynthSpec:
    """Full recipe for one synthetic long-tailed dataset.

    Attributes:
        num_classes: number of classes C (>= 2).
        n_max: head-class training count.
        imbalance_factor: head/tail count ratio (>= 1).
        feature_dim: input dimensionality.
        cluster_spread: per-class Gaussian standard deviation.
        class_center_scale: scale of the random class centers; the ratio
            center scale / spread sets task difficulty.
        seed: RNG seed; fixes centers and samples bit-exactly.
        test_per_class: balanced test-set size per class.
    """

    num_classes: int = 10
    n_max: int = 5000
    imbalance_factor: float = 100.0
    feature_dim: int = 16
    cluster_spread: float = 2.0
    class_center_scale: float = 1.0
    seed: int = 0
    test_per_class: int = 100

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.imbalance_factor < 1:
            raise ValueError(f"imbalance_factor must be >= 1, got {self.imbalance_factor}")
        if self.feature_dim < 2:
            raise ValueError(f"feature_dim must be >= 2, got {self.feature_dim}")
        if self.cluster_spread <= 0:
            raise ValueError(f"cluster_spread must be > 0, got {self.cluster_spread}")
        if self.class_center_scale <= 0:
            raise ValueError(f"class_center_scale must be > 0, got {self.class_center_scale}")
        if self.test_per_class < 1:
            raise ValueError(f"test_per_class must be >= 1, got {self.test_per_class}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "n_max": self.n_max,
            "imbalance_factor": self.imbalance_factor,
            "feature_dim": self.feature_dim,
            "cluster_spread": self.cluster_spread,
            "class_center_scale": self.class_center_scale,
            "seed": self.seed,
            "test_per_class": self.test_per_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


@dataclass
class Dataset:
    """Feature vectors with integer labels, long-tailed train / balanced test."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    counts: ClassCounts

    def __post_init__(self):
        c = self.counts.num_classes
        for name, y in (("train_y", self.train_y), ("test_y", self.test_y)):
            if y.size and (y.min() < 0 or y.max() >= c):
                raise ValueError(f"{name} has labels outside [0, {c})")
        hist = np.bincount(self.train_y, minlength=c)
        if tuple(int(h) for h in hist) != self.counts.counts:
            raise ValueError(
                f"train label histogram {tuple(hist)} does not match counts {self.counts.counts}"
            )

    @property
    def num_classes(self) -> int:
        return self.counts.num_classes

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_class_counts(num_classes: int, n_max: int, imbalance_factor: float) -> ClassCounts:
    """Exponentially decaying class-count profile.

    ``counts[j] = round(n_max * IF**(-j/(C-1)))`` (round half up, clamped to
    >= 1), so the head class holds ``n_max`` samples and the tail class
    ``round(n_max / IF)``.

    Args:
        num_classes: number of classes C (>= 2).
        n_max: head-class count (>= 1).
        imbalance_factor: head/tail ratio IF (>= 1); requires n_max/IF >= 1,
            otherwise the tail class would be empty.

    Returns:
        ClassCounts with the non-increasing profile.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if imbalance_factor < 1:
        raise ValueError(f"imbalance_factor must be >= 1, got {imbalance_factor}")
    if n_max / imbalance_factor < 1:
        raise ValueError(
            f"n_max={n_max} is smaller than imbalance_factor={imbalance_factor}; "
            "the tail class would have no samples"
        )
    counts = []
    for j in range(num_classes):
        raw = n_max * imbalance_factor ** (-j / (num_classes - 1))
        counts.append(max(_round_half_up(raw), 1))
    return ClassCounts(tuple(counts))


def lambda_vector(counts: ClassCounts) -> np.ndarray:
    """Per-class stimulus intensities: ``lambda_j = log(n_max) - log(n_j)``.

    Zero for the most frequent class and growing as classes get rarer;
    depends only on count ratios, so scaling every count by a constant
    leaves it unchanged.
    """
    n = counts.as_array()
    return np.log(n[0]) - np.log(n)


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Draw a Gaussian-cluster dataset following the spec's count profile.

    Class centers are drawn once from ``N(0, class_center_scale^2 I)``, then
    each class contributes ``counts[j]`` train and ``test_per_class`` test
    samples from ``N(center_j, cluster_spread^2 I)``. Everything is derived
    from ``spec.seed``, so equal specs give bit-identical datasets.
    """
    counts = make_class_counts(spec.num_classes, spec.n_max, spec.imbalance_factor)
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.num_classes, spec.feature_dim)) * spec.class_center_scale

    train_parts, train_labels = [], []
    for j, n_j in enumerate(counts.counts):
        x = centers[j] + spec.cluster_spread * rng.standard_normal((n_j, spec.feature_dim))
        train_parts.append(x)
        train_labels.append(np.full(n_j, j, dtype=np.int64))

    test_parts, test_labels = [], []
    for j in range(spec.num_classes):
        x = centers[j] + spec.cluster_spread * rng.standard_normal(
            (spec.test_per_class, spec.feature_dim)
        )
        test_parts.append(x)
        test_labels.append(np.full(spec.test_per_class, j, dtype=np.int64))

    return Dataset(
        train_x=np.ascontiguousarray(np.concatenate(train_parts)),
        train_y=np.concatenate(train_labels),
        test_x=np.ascontiguousarray(np.concatenate(test_parts)),
        test_y=np.concatenate(test_labels),
        counts=counts,
    )


def _write_split_csv(path: Path, x: np.ndarray, y: np.ndarray) -> None:
    dim = x.shape[1]
    header = "label," + ",".join(f"f{i}" for i in range(dim))
    with open(path, "w") as f:
        f.write(header + "\n")
        for label, row in zip(y, x):
            f.write(f"{int(label)}," + ",".join(repr(float(v)) for v in row) + "\n")


def _read_split_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        if not header or header[0] != "label":
            raise ValueError(f"{path}: expected header starting with 'label'")
        dim = len(header) - 1
        labels, rows = [], []
        for line in f:
            fields = line.rstrip("\n").split(",")
            if len(fields) != dim + 1:
                raise ValueError(f"{path}: row has {len(fields)} fields, expected {dim + 1}")
            labels.append(int(fields[0]))
            rows.append([float(v) for v in fields[1:]])
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return np.ascontiguousarray(x), np.asarray(labels, dtype=np.int64)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> dict[str, Path]:
    """Write train.csv / test.csv (header ``label,f0,f1,...``) and counts.json.

    Float cells use shortest round-trip formatting, so save/load is
    bit-exact and re-saving the same dataset reproduces identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.csv",
        "test": out / "test.csv",
        "counts": out / "counts.json",
    }
    _write_split_csv(paths["train"], dataset.train_x, dataset.train_y)
    _write_split_csv(paths["test"], dataset.test_x, dataset.test_y)
    with open(paths["counts"], "w") as f:
        json.dump(list(dataset.counts.counts), f)
        f.write("\n")
    return paths


def load_dataset(in_dir: str | Path) -> Dataset:
    """Load a dataset directory written by :func:`save_dataset`."""
    src = Path(in_dir)
    for name in ("train.csv", "test.csv", "counts.json"):
        if not (src / name).exists():
            raise FileNotFoundError(f"dataset directory {src} is missing {name}")
    train_x, train_y = _read_split_csv(src / "train.csv")
    test_x, test_y = _read_split_csv(src / "test.csv")
    with open(src / "counts.json") as f:
        counts = ClassCounts(tuple(json.load(f)))
    return Dataset(train_x=train_x, train_y=train_y, test_x=test_x, test_y=test_y, counts=counts)
