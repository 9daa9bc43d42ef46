"""Synthetic benchmark, train/test splitting, client sharding and IDX loading."""
from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYNTHETIC_DIM = 10
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # (n, input_dim) float64
    y: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError(f"inconsistent shapes X={self.X.shape} y={self.y.shape}")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")

    def __len__(self):
        return len(self.y)

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.n_classes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = [f"x{i}" for i in range(self.input_dim)] + ["label"]
        buf.write(",".join(cols) + "\n")
        for row, label in zip(self.X, self.y):
            buf.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
        return buf.getvalue()


@dataclass
class ShardPlan:
    assignment: np.ndarray  # example index -> client id
    n_clients: int
    strategy: str
    params: dict = field(default_factory=dict)

    def indices(self, client: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client)

    def shards(self, dataset: Dataset) -> list[Dataset]:
        return [dataset.subset(self.indices(c)) for c in range(self.n_clients)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clients)


def synthetic_labels(X) -> np.ndarray:
    # strict inequality: a sum of exactly 5 is class 0
    return (np.asarray(X).sum(axis=1) > 5.0).astype(np.int64)


def gen_synthetic(n: int, seed) -> Dataset:
    """``n`` points uniform on [0,1]^10, label 1 iff the coordinates sum past 5."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.random((n, SYNTHETIC_DIM))
    return Dataset(X, synthetic_labels(X), 2)


def train_test_split(dataset: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test > n - 1:
        raise ValueError(f"split of {n} examples at {test_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))


def shard_iid(train: Dataset, n_clients: int, seed) -> ShardPlan:
    n = len(train)
    if n_clients < 1 or n_clients > n:
        raise ValueError(f"cannot split {n} examples across {n_clients} clients")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    # array_split hands the remainder to the first clients
    for c, chunk in enumerate(np.array_split(perm, n_clients)):
        assignment[chunk] = c
    return ShardPlan(assignment, n_clients, "iid")


def shard_dirichlet(train: Dataset, n_clients: int, alpha: float, seed) -> ShardPlan:
    """Label-skewed shards: per class, client proportions drawn from Dirichlet(alpha)."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    n = len(train)
    if n_clients < 1 or n_clients > n:
        raise ValueError(f"cannot split {n} examples across {n_clients} clients")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    for cls in range(train.n_classes):
        idx = np.flatnonzero(train.y == cls)
        if len(idx) == 0:
            continue
        idx = rng.permutation(idx)
        props = rng.dirichlet(np.full(n_clients, float(alpha)))
        cuts = np.floor(np.cumsum(props)[:-1] * len(idx)).astype(np.int64)
        for c, chunk in enumerate(np.split(idx, cuts)):
            assignment[chunk] = c
    sizes = np.bincount(assignment, minlength=n_clients)
    for c in range(n_clients):
        if sizes[c] == 0:
            donor = int(np.argmax(sizes))
            moved = np.flatnonzero(assignment == donor)[-1]
            assignment[moved] = c
            sizes[donor] -= 1
            sizes[c] += 1
    return ShardPlan(assignment, n_clients, "dirichlet", {"alpha": float(alpha)})


def gen_client_datasets(n_clients: int, n_per_client: int, seed) -> tuple[Dataset, ShardPlan]:
    """Independent synthetic datasets, one seed per client, concatenated with their plan."""
    if n_clients < 1 or n_per_client < 1:
        raise ValueError("need at least one client and one example per client")
    if isinstance(seed, np.random.Generator):
        parts = [gen_synthetic(n_per_client, g) for g in seed.spawn(n_clients)]
    else:
        parts = [gen_synthetic(n_per_client, s) for s in np.random.SeedSequence(seed).spawn(n_clients)]
    data = Dataset(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]), 2)
    assignment = np.repeat(np.arange(n_clients), n_per_client)
    return data, ShardPlan(assignment, n_clients, "per-client-seed", {"n_per_client": n_per_client})


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, what: str):
    if len(raw) < 8:
        raise IdxFormatError(f"{what}: file too short for an IDX header")
    got, count = struct.unpack(">II", raw[:8])
    if got != magic:
        raise IdxFormatError(f"{what}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    if magic == IDX_IMAGES_MAGIC:
        if len(raw) < 16:
            raise IdxFormatError(f"{what}: truncated header")
        rows, cols = struct.unpack(">II", raw[8:16])
        body, shape = raw[16:], (count, rows * cols)
    else:
        body, shape = raw[8:], (count,)
    need = int(np.prod(shape))
    if len(body) < need:
        raise IdxFormatError(f"{what}: truncated, expected {need} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=need).reshape(shape)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair (optionally gzipped) into a 10-class dataset."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, str(images_path))
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise IdxFormatError("label value above 9")
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64), 10)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path, rows: int = 28, cols: int = 28):
    """Write uint8 images (n, rows*cols) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, len(images), rows, cols) + images.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())
