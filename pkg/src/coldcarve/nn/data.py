"""Datasets: container, synthetic generators and file formats (IDX, CSV).

Generators produce float32 inputs inside ``[0, 1]`` so that adversarial
perturbations can be clipped to the input domain.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

from ..errors import SchemaError, ShapeMismatch

SPLITS = ("train", "test", "recovery")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray | None = None
    split: str = "train"
    soft_targets: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float32)
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        n = len(self.inputs)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ShapeMismatch(f"{n} inputs but labels of shape {self.labels.shape}")
            if self.num_classes is None:
                self.num_classes = int(self.labels.max()) + 1 if n else 0
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.soft_targets is not None:
            self.soft_targets = np.asarray(self.soft_targets, dtype=np.float32)
            if len(self.soft_targets) != n:
                raise ShapeMismatch("soft_targets and inputs differ in length")

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx],
                       None if self.labels is None else self.labels[idx],
                       split or self.split,
                       None if self.soft_targets is None else self.soft_targets[idx],
                       self.num_classes)

    def fraction(self, frac: float, seed: int = 0, split: str | None = None) -> "Dataset":
        """A random ``frac`` of the samples (at least one)."""
        if not 0 < frac <= 1:
            raise ValueError("fraction must be in (0, 1]")
        k = max(1, int(round(frac * len(self))))
        idx = np.sort(np.random.default_rng(seed).permutation(len(self))[:k])
        return self.subset(idx, split)

    def unlabeled(self, split: str = "recovery") -> "Dataset":
        return Dataset(self.inputs, None, split, None, self.num_classes)

    def with_soft_targets(self, targets) -> "Dataset":
        return replace(self, soft_targets=np.asarray(targets, dtype=np.float32))


def _finish(x, y, split, k) -> Dataset:
    return Dataset(np.clip(x, 0, 1).astype(np.float32), y, split, num_classes=k)


# --------------------------------------------------------------------------
# generators


def make_blobs(n: int, n_classes: int = 3, n_features: int = 2, std: float = 0.08,
               seed: int = 0, shift: float = 0.0, centers_seed: int = 0,
               split: str = "train") -> Dataset:
    """Isotropic Gaussian clusters.  ``shift`` moves every sample along a
    fixed random direction, giving a related but distribution-shifted set."""
    crng = np.random.default_rng([centers_seed, 11])
    centers = crng.uniform(0.2, 0.8, (n_classes, n_features))
    direction = crng.normal(size=n_features)
    direction /= np.linalg.norm(direction)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, n)
    x = centers[y] + std * rng.normal(size=(n, n_features)) + shift * direction
    return _finish(x, y, split, n_classes)


def make_moons(n: int, noise: float = 0.05, seed: int = 0, split: str = "train") -> Dataset:
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    theta = rng.uniform(0, np.pi, n)
    x = np.where(y[:, None] == 0,
                 np.stack([np.cos(theta), np.sin(theta)], 1),
                 np.stack([1 - np.cos(theta), 0.5 - np.sin(theta)], 1))
    x = x + noise * rng.normal(size=x.shape)
    # map [-1, 2] x [-0.5, 1] into the unit square
    x = (x - [-1.0, -0.5]) / [3.0, 1.5]
    return _finish(x, y, split, 2)


def make_xor(n: int = 4, noise: float = 0.0, seed: int = 0, split: str = "train") -> Dataset:
    """The four XOR corners, cycled to ``n`` samples, optionally jittered."""
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)
    idx = np.arange(n) % 4
    x = corners[idx]
    if noise:
        x = 0.5 + (x - 0.5) * (1 - 2 * noise) + noise * np.random.default_rng(seed).uniform(-1, 1, x.shape)
    y = (corners[idx, 0] != corners[idx, 1]).astype(np.int64)
    return _finish(x, y, split, 2)


def _prototypes(n_classes: int, per_class: int, side: int, seed: int) -> np.ndarray:
    """Smooth random stroke images, ``per_class`` for each class."""
    rng = np.random.default_rng([seed, 13])
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1)
    protos = np.zeros((n_classes, per_class, side, side))
    for c in range(n_classes):
        for j in range(per_class):
            img = np.zeros((side, side))
            for _ in range(3):
                cy, cx = rng.uniform(0.15, 0.85, 2)
                sy, sx = rng.uniform(0.08, 0.3, 2)
                img += np.exp(-((yy - cy) ** 2 / (2 * sy ** 2) + (xx - cx) ** 2 / (2 * sx ** 2)))
            protos[c, j] = img / img.max()
    return protos


def make_patterns(n: int, n_classes: int = 3, side: int = 8, per_class: int = 3,
                  noise: float = 0.15, seed: int = 0, shift: float = 0.0,
                  proto_seed: int = 0, split: str = "train") -> Dataset:
    """Single-channel ``side x side`` images built from per-class prototypes.

    Each sample blends two prototypes of its class, rolls it by up to one
    pixel and adds Gaussian noise.  ``shift`` raises the background level
    and the noise, mimicking a similar-but-different capture setup.
    """
    protos = _prototypes(n_classes, per_class, side, proto_seed)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, n)
    a = rng.integers(0, per_class, n)
    b = rng.integers(0, per_class, n)
    w = rng.uniform(0.3, 0.7, n)[:, None, None]
    img = w * protos[y, a] + (1 - w) * protos[y, b]
    dy = rng.integers(-1, 2, n)
    dx = rng.integers(-1, 2, n)
    for i in range(n):
        img[i] = np.roll(img[i], (dy[i], dx[i]), axis=(0, 1))
    img = img * (1 - 0.5 * shift) + 0.5 * shift + (noise * (1 + shift)) * rng.normal(size=img.shape)
    return _finish(img[:, None], y, split, n_classes)


GENERATORS = {"blobs": make_blobs, "moons": make_moons, "xor": make_xor, "patterns": make_patterns}


# --------------------------------------------------------------------------
# IDX

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_IDX_CODES = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}


def read_idx(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise SchemaError(f"{path}: not an IDX file")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise SchemaError(f"{path}: unknown IDX type code 0x{code:02x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dtype = np.dtype(_IDX_TYPES[code])
    body = raw[4 + 4 * ndim:]
    if len(body) != dtype.itemsize * int(np.prod(dims)):
        raise SchemaError(f"{path}: payload of {len(body)} bytes does not match dims {dims}")
    return np.frombuffer(body, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    a = np.asarray(array)
    code = _IDX_CODES.get(a.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"dtype {a.dtype} has no IDX type code")
    with open(path, "wb") as f:
        f.write(bytes([0, 0, code, a.ndim]))
        f.write(struct.pack(f">{a.ndim}I", *a.shape))
        f.write(a.astype(np.dtype(_IDX_TYPES[code])).tobytes())


def load_idx(images_path, labels_path=None, split: str = "train",
             scale: float | None = None) -> Dataset:
    """Images are scaled by 1/255 when stored as bytes (or by ``scale``)."""
    x = read_idx(images_path)
    if scale is None:
        scale = 1 / 255 if x.dtype == np.uint8 else 1.0
    x = x.astype(np.float32) * np.float32(scale)
    if x.ndim == 3:
        x = x[:, None]
    y = None if labels_path is None else read_idx(labels_path).astype(np.int64)
    return Dataset(x, y, split)


# --------------------------------------------------------------------------
# CSV: one sample per row, label last (or no label column)


def read_csv(path, labeled: bool = True, split: str = "train", shape=None) -> Dataset:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: no rows")
    try:
        table = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    x, y = (table[:, :-1], table[:, -1]) if labeled else (table, None)
    if y is not None and np.any(y != np.round(y)):
        raise SchemaError(f"{path}: labels must be integers")
    if shape is not None:
        x = x.reshape(len(x), *shape)
    return Dataset(x, None if y is None else y.astype(np.int64), split)


def write_csv(path, data: Dataset) -> None:
    flat = data.inputs.reshape(len(data), -1)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for i in range(len(data)):
            row = [repr(float(v)) for v in flat[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)
