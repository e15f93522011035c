"""Dataset ingestion and synthesis.

CSV tabular loading, IDX image loading with average-pool downsampling,
synthetic generators (the 1-D sine toy set and the two-crescent banana set
are documented stand-ins: the benchmarks they mirror have no published
generator equations), train-only standardization, and deterministic splits.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    task: str  # "regression" | "classification"
    provenance: str = ""

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y row counts differ")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)  # constant columns pass through
        return Standardizer(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


@dataclass
class Split:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    x_standardizer: Standardizer | None
    y_standardizer: Standardizer | None
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    task: str

    def manifest(self) -> dict:
        out = {"seed": self.seed, "task": self.task,
               "n_train": int(self.train_idx.size), "n_test": int(self.test_idx.size)}
        if self.x_standardizer is not None:
            out["x_mean"] = self.x_standardizer.mean.tolist()
            out["x_std"] = self.x_standardizer.std.tolist()
        if self.y_standardizer is not None:
            out["y_mean"] = self.y_standardizer.mean.tolist()
            out["y_std"] = self.y_standardizer.std.tolist()
        return out


def train_test_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0,
                     standardize: bool = True) -> Split:
    """Disjoint, exhaustive, seed-deterministic split; the standardizer is
    fitted on the training rows only (targets too, for regression)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    perm = rng.numpy_rng(seed, rng.DOMAIN_SPLIT).permutation(ds.n)
    n_test = int(round(ds.n * test_fraction))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    x_tr, x_te = ds.x[train_idx], ds.x[test_idx]
    y_tr, y_te = ds.y[train_idx], ds.y[test_idx]
    sx = sy = None
    if standardize:
        sx = Standardizer.fit(x_tr)
        x_tr, x_te = sx.transform(x_tr), sx.transform(x_te)
        if ds.task == "regression":
            sy = Standardizer.fit(y_tr)
            y_tr, y_te = sy.transform(y_tr), sy.transform(y_te)
    return Split(x_tr, y_tr, x_te, y_te, sx, sy, train_idx, test_idx, seed, ds.task)


def load_csv(path, target_column: str, task: str) -> Dataset:
    """Numeric CSV with a header row; rows whose target (or any feature)
    fails to parse are dropped with one counted warning."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty file")
        if target_column not in header:
            raise ValueError(f"{path}: no column named {target_column!r}")
        t_idx = header.index(target_column)
        rows, targets, dropped = [], [], 0
        for row in reader:
            if len(row) != len(header):
                dropped += 1
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                dropped += 1
                continue
            targets.append(vals.pop(t_idx))
            rows.append(vals)
    if dropped:
        warnings.warn(f"load_csv: dropped {dropped} malformed rows from {path}")
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    x = np.asarray(rows, dtype=np.float64)
    if task == "classification":
        y = np.asarray(targets, dtype=np.float64).astype(np.int64)
    else:
        y = np.asarray(targets, dtype=np.float64)[:, None]
    return Dataset(x, y, task, provenance=f"csv:{path}")


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Full-precision writer (repr round-trips float64 bitwise)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"{path}: truncated IDX file")
    return buf


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(fh, 16, path))
        if magic != IDX_MAGIC_IMAGES:
            raise ValueError(f"{path}: bad IDX image magic {magic:#010x}")
        data = np.frombuffer(_read_exact(fh, n * h * w, path), dtype=np.uint8)
    return data.reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, path))
        if magic != IDX_MAGIC_LABELS:
            raise ValueError(f"{path}: bad IDX label magic {magic:#010x}")
        data = np.frombuffer(_read_exact(fh, n, path), dtype=np.uint8)
    return data.astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, h, w))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


def downsample_images(images: np.ndarray, side: int) -> np.ndarray:
    """Average-pool square images [n, H, W] down to [n, side, side]."""
    n, h, w = images.shape
    if h % side or w % side:
        raise ValueError(f"side {side} must divide image shape {h}x{w}")
    fh, fw = h // side, w // side
    return images.reshape(n, side, fh, side, fw).mean(axis=(2, 4))


def load_idx(images_path, labels_path, downsample_to: int | None = 7) -> Dataset:
    """IDX image/label pair -> flattened [0,1] features and class labels."""
    images = read_idx_images(images_path).astype(np.float64) / 255.0
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"image/label count mismatch: {images.shape[0]} vs "
                         f"{labels.shape[0]}")
    if downsample_to is not None and downsample_to != images.shape[1]:
        images = downsample_images(images, downsample_to)
    x = images.reshape(images.shape[0], -1)
    return Dataset(x, labels, "classification",
                   provenance=f"idx:{images_path}+{labels_path}")


def make_toy_1d(n: int, seed: int = 0, scale: float = 1.0,
                noise: float = 0.1) -> Dataset:
    """x ~ Uniform(-5, 5), y = scale*sin(x) + eps, eps ~ N(0, noise^2)."""
    if n < 10:
        raise ValueError("n must be at least 10")
    r = rng.numpy_rng(seed, rng.DOMAIN_INIT, 10)
    x = r.uniform(-5.0, 5.0, size=(n, 1))
    y = scale * np.sin(x) + noise * r.normal(size=(n, 1))
    return Dataset(x, y, "regression", provenance=f"toy_1d:n={n},seed={seed}")


def make_banana(n: int, seed: int = 0, noise: float = 0.15) -> Dataset:
    """Two interleaving crescents with radial noise; binary labels."""
    if n < 10:
        raise ValueError("n must be at least 10")
    r = rng.numpy_rng(seed, rng.DOMAIN_INIT, 11)
    n0 = n // 2
    n1 = n - n0
    t0 = r.uniform(0.0, np.pi, size=n0)
    t1 = r.uniform(0.0, np.pi, size=n1)
    r0 = 1.0 + noise * r.normal(size=n0)
    r1 = 1.0 + noise * r.normal(size=n1)
    c0 = np.c_[r0 * np.cos(t0), r0 * np.sin(t0)]
    c1 = np.c_[1.0 - r1 * np.cos(t1), 0.5 - r1 * np.sin(t1)]
    x = np.concatenate([c0, c1], axis=0)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = r.permutation(n)
    return Dataset(x[perm], y[perm], "classification",
                   provenance=f"banana:n={n},seed={seed}")


STANDIN_FILES = {
    "train_images": "digits-images.idx3-ubyte",
    "train_labels": "digits-labels.idx1-ubyte",
    "ood_images": "patches-images.idx3-ubyte",
    "ood_labels": "patches-labels.idx1-ubyte",
}


def ensure_standin_idx(base_dir) -> dict[str, Path]:
    """Materialize the bundled stand-in image corpus as real IDX files.

    In-distribution: the 8x8 handwritten-digit scans shipped with sklearn.
    Out-of-distribution: 8x8 grayscale patches cut from sklearn's two bundled
    natural photographs. Both go through the same IDX read path as any
    user-supplied corpus.
    """
    base = Path(base_dir)
    base.mkdir(parents=True, exist_ok=True)
    paths = {k: base / v for k, v in STANDIN_FILES.items()}
    if all(p.exists() for p in paths.values()):
        return paths

    from sklearn.datasets import load_digits, load_sample_images
    digits = load_digits()
    images = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    write_idx_images(paths["train_images"], images)
    write_idx_labels(paths["train_labels"], digits.target.astype(np.uint8))

    patches, origins = [], []
    for i, img in enumerate(load_sample_images().images):
        gray = np.asarray(img, dtype=np.float64).mean(axis=2)
        h, w = (gray.shape[0] // 8) * 8, (gray.shape[1] // 8) * 8
        blocks = gray[:h, :w].reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
        patches.append(blocks.reshape(-1, 8, 8))
        origins.append(np.full(patches[-1].shape[0], i, dtype=np.uint8))
    patch_arr = np.round(np.concatenate(patches)).astype(np.uint8)
    write_idx_images(paths["ood_images"], patch_arr)
    write_idx_labels(paths["ood_labels"], np.concatenate(origins))
    return paths


MNIST_LAYOUT = {
    "train_images": "mnist/train-images-idx3-ubyte",
    "train_labels": "mnist/train-labels-idx1-ubyte",
    "eval_images": "mnist/t10k-images-idx3-ubyte",
    "eval_labels": "mnist/t10k-labels-idx1-ubyte",
    "ood_images": "fashion/t10k-images-idx3-ubyte",
    "ood_labels": "fashion/t10k-labels-idx1-ubyte",
}


def resolve_image_corpus(base_dir, downsample_to: int | None = None):
    """Locate the image corpus for the OOD protocol.

    If base_dir follows MNIST_LAYOUT (user-supplied digit/clothing IDX files)
    the full corpus is loaded; otherwise the bundled stand-in corpus is
    materialized there and used. Returns (name, train, held_out, ood) where
    held_out is None when the corpus ships no separate evaluation split.
    """
    base = Path(base_dir)
    literal = {k: base / v for k, v in MNIST_LAYOUT.items()}
    if all(p.exists() for p in literal.values()):
        side = 7 if downsample_to is None else downsample_to
        train = load_idx(literal["train_images"], literal["train_labels"], side)
        held = load_idx(literal["eval_images"], literal["eval_labels"], side)
        ood = load_idx(literal["ood_images"], literal["ood_labels"], side)
        return "mnist", train, held, ood
    paths = ensure_standin_idx(base)
    side = 4 if downsample_to is None else downsample_to
    train = load_idx(paths["train_images"], paths["train_labels"], side)
    ood = load_idx(paths["ood_images"], paths["ood_labels"], side)
    return "standin", train, None, ood
