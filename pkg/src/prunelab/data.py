"""Datasets: IDX (MNIST container) files, seeded Gaussian clusters, batching.

IDX layout: big-endian u32 magic (0x00000803 for images, 0x00000801 for
labels), one big-endian u32 per dimension, then an unsigned-byte payload in
row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import BadMagic, CountMismatch, EmptyDataset, InvalidArg, LabelOutOfRange, TruncatedFile

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # float32, (n, ...) normalised
    labels: np.ndarray  # int64, (n,)
    num_classes: int
    split: str = "train"
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise CountMismatch(f"{len(self.inputs)} inputs vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def stats(self):
        return self.mean, self.std

    def take(self, idx) -> tuple:
        return self.inputs[idx], self.labels[idx]


def channel_stats(x: np.ndarray) -> tuple:
    """Per-channel mean/std: axis 1 for (n, C, ...) inputs, per feature for (n, d)."""
    axes = (0,) + tuple(range(2, x.ndim))
    mean = x.mean(axis=axes, dtype=np.float64)
    std = x.std(axis=axes, dtype=np.float64)
    std[std == 0] = 1.0
    return mean.astype(np.float32), std.astype(np.float32)


def normalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    shape = (1, -1) + (1,) * (x.ndim - 2)
    return ((x - mean.reshape(shape)) / std.reshape(shape)).astype(np.float32)


# ---------------------------------------------------------------------------
# IDX

def read_idx(path, magic: int) -> np.ndarray:
    """Raw uint8 payload of an IDX file with the given magic number."""
    buf = Path(path).read_bytes()
    if len(buf) < 4:
        raise TruncatedFile(f"{path}: missing header")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic {found:#010x}, expected {magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise TruncatedFile(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(buf) - header < size:
        raise TruncatedFile(f"{path}: payload has {len(buf) - header} bytes, expected {size}")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim not in (1, 3):
        raise InvalidArg("IDX arrays must be 1-d labels or 3-d images")
    magic = LABELS_MAGIC if array.ndim == 1 else IMAGES_MAGIC
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def load_idx(images_path, labels_path, num_classes: int = 10, split: str = "train",
             stats: Optional[tuple] = None) -> Dataset:
    """Load an IDX image/label pair, scale to [0, 1] and normalise.

    Test splits should pass the train split's ``stats`` so no statistics leak.
    """
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise CountMismatch(f"{len(images)} images vs {len(labels)} labels")
    x = (images.astype(np.float32) / np.float32(255.0))[:, None, :, :]
    mean, std = stats if stats is not None else channel_stats(x)
    return Dataset(normalize(x, mean, std), labels.astype(np.int64), num_classes, split, mean, std,
                   name=Path(images_path).name)


# ---------------------------------------------------------------------------
# synthetic clusters

def _cluster_means(classes: int, k: int, separation: float, rng) -> np.ndarray:
    if k >= classes:
        q, _ = np.linalg.qr(rng.standard_normal((k, classes)))
        # orthonormal columns scaled by s/sqrt(2) sit exactly s apart
        means = q.T * (separation / np.sqrt(2.0))
    else:
        means = rng.standard_normal((classes, k))
        d = np.linalg.norm(means[:, None] - means[None], axis=-1)
        means *= separation / d[np.triu_indices(classes, 1)].min()
    return means * (1.0 + 1e-9)


def synth_gaussians(classes: int, dim: int, per_class: int, seed: int, separation: float,
                    split: str = "train", informative: Optional[int] = None, noise: float = 1.0,
                    stats: Optional[tuple] = None) -> Dataset:
    """``classes`` isotropic Gaussian clusters in ``dim`` dimensions.

    Cluster means depend only on ``seed`` and are pairwise at least
    ``separation`` apart (in units of the unit noise scale, before
    normalisation). If ``informative`` is set, means differ only on that many
    seeded coordinates; the rest is pure noise. ``split`` selects an
    independent sample stream over the same means.
    """
    if classes < 2:
        raise InvalidArg("need at least 2 classes")
    if separation <= 0 or dim < 1 or per_class < 1 or noise <= 0:
        raise InvalidArg("separation, dim, per_class and noise must be positive")
    k = dim if informative is None else int(informative)
    if not 1 <= k <= dim:
        raise InvalidArg(f"informative must lie in [1, {dim}]")
    mean_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    centers = np.zeros((classes, dim))
    coords = np.sort(mean_rng.choice(dim, size=k, replace=False))
    centers[:, coords] = _cluster_means(classes, k, separation, mean_rng)

    stream = {"train": 1, "test": 2}.get(split, 3)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), stream]))
    labels = np.repeat(np.arange(classes), per_class)
    labels = labels[rng.permutation(len(labels))]
    x = centers[labels] + noise * rng.standard_normal((len(labels), dim))
    x = x.astype(np.float32)
    mean, std = stats if stats is not None else channel_stats(x)
    return Dataset(normalize(x, mean, std), labels.astype(np.int64), classes, split, mean, std,
                   name=f"gauss{classes}x{dim}")


# ---------------------------------------------------------------------------
# batching

class BatchIterator:
    """Seeded mini-batches; each call to :meth:`epoch` is one full pass.

    The visiting order of epoch ``e`` depends only on ``(seed, e)``. The final
    short batch is kept.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int):
        if batch_size < 1:
            raise InvalidArg("batch size must be >= 1")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = int(seed)
        self.epochs_done = 0

    def order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
        return rng.permutation(len(self.dataset))

    def epoch(self) -> Iterator[tuple]:
        idx = self.order(self.epochs_done)
        self.epochs_done += 1
        for start in range(0, len(idx), self.batch_size):
            yield self.dataset.take(idx[start:start + self.batch_size])

    def __iter__(self):
        return self.epoch()


def batches(dataset: Dataset, batch_size: int, seed: int) -> BatchIterator:
    return BatchIterator(dataset, batch_size, seed)


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> tuple:
    """One batch drawn without replacement (used for scoring)."""
    if len(dataset) == 0:
        raise EmptyDataset("cannot sample from an empty dataset")
    idx = rng.choice(len(dataset), size=min(batch_size, len(dataset)), replace=False)
    return dataset.take(idx)
