"""Dataset construction: seeded synthetic blobs and IDX file ingestion."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from interlab.errors import ConfigError, IngestionError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class DatasetSpec:
    """Either ``kind="blobs"`` (synthetic) or ``kind="idx"`` (image + label files).

    Blob inputs are laid out as a ``height x width`` raster so grid partitions
    have something to partition; ``dim`` must equal ``height * width``.
    """

    kind: str = "blobs"
    num_classes: int = 10
    height: int = 8
    width: int = 8
    spread: float = 0.15
    seed: int = 0
    n_train: int = 2000
    n_test: int = 500
    image_path: Optional[str] = None
    label_path: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.height * self.width

    @classmethod
    def from_dict(cls, d: dict, where: str = "dataset") -> "DatasetSpec":
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ConfigError(f"{where}.{key}: unknown field")
        return cls(**d)


@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    height: int
    width: int
    num_classes: int


def make_blobs(spec: DatasetSpec) -> Dataset:
    if spec.num_classes < 2 or spec.dim < 1:
        raise ConfigError("blobs need at least 2 classes and 1 feature")
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.2, 0.8, size=(spec.num_classes, spec.dim))

    def draw(count: int):
        y = rng.integers(0, spec.num_classes, size=count)
        x = centers[y] + spec.spread * rng.standard_normal((count, spec.dim))
        return np.clip(x, 0.0, 1.0), y

    x_tr, y_tr = draw(spec.n_train)
    x_te, y_te = draw(spec.n_test)
    return Dataset(x_tr, y_tr, x_te, y_te, spec.height, spec.width, spec.num_classes)


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Parse an unsigned-byte IDX file into an integer array of its declared shape."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IngestionError(f"{path}: too short for an IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code != 0x08:
        raise IngestionError(f"{path}: not an unsigned-byte IDX file")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IngestionError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims)) if dims else 0
    body = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if body.size != count:
        raise IngestionError(f"{path}: expected {count} bytes of data, found {body.size}")
    return body.reshape(dims)


def write_idx(path, array: np.ndarray):
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only unsigned-byte IDX files are supported")
    header = struct.pack(">HBB", 0, 0x08, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_idx_dataset(spec: DatasetSpec) -> Dataset:
    if not spec.image_path or not spec.label_path:
        raise ConfigError("dataset.image_path and dataset.label_path are required for kind='idx'")
    images = read_idx(spec.image_path)
    labels = read_idx(spec.label_path)
    if images.ndim != 3:
        raise IngestionError(f"{spec.image_path}: expected a 3-d image array, got {images.ndim}-d")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise IngestionError("label count does not match image count")
    n = images.shape[0]
    if spec.n_train + spec.n_test > n:
        raise ConfigError(f"dataset: requested {spec.n_train + spec.n_test} examples, file has {n}")
    x = images.reshape(n, -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    num_classes = int(y.max()) + 1
    a, b = spec.n_train, spec.n_train + spec.n_test
    return Dataset(x[:a], y[:a], x[a:b], y[a:b], images.shape[1], images.shape[2],
                   max(num_classes, spec.num_classes))


def load_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind == "blobs":
        return make_blobs(spec)
    if spec.kind == "idx":
        return load_idx_dataset(spec)
    raise ConfigError(f"dataset.kind: unknown kind {spec.kind!r}")
