"""Dataset ingestion, labeled/unlabeled splitting, client partitioning and
augmentation transforms.

Supported sources: big-endian IDX image/label pairs, CIFAR-style 3073-byte
binary records, and a seeded synthetic Gaussian-blob generator for desk-scale
runs. Partitioning is either an even seeded deal ("iid") or class-wise
Dirichlet sampling, where a smaller concentration means more per-client skew.

Everything here is deterministic given its seed; datasets are immutable after
construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataFormatError, InvalidInputError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
STREAM_PARTS = 10


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix in [0, 1] with optional integer class labels.

    `image_shape` declares the row layout (h, w) or (h, w, channels) for
    datasets whose rows are flattened images; geometric augmentations
    require it.
    """

    features: np.ndarray
    labels: np.ndarray | None
    num_classes: int
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise InvalidInputError("dataset features must be a 2-D matrix")
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("dataset features contain non-finite values")
        object.__setattr__(self, "features", features)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if labels.size != features.shape[0]:
                raise InvalidInputError("labels do not align with features")
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise InvalidInputError("labels out of range for num_classes")
            object.__setattr__(self, "labels", labels)
        if self.image_shape is not None:
            shape = tuple(int(s) for s in self.image_shape)
            if int(np.prod(shape)) != features.shape[1]:
                raise InvalidInputError("image_shape does not match feature length")
            object.__setattr__(self, "image_shape", shape)

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.features[indices], labels, self.num_classes, self.image_shape)

    def without_labels(self) -> "Dataset":
        return Dataset(self.features, None, self.num_classes, self.image_shape)


# ---------------------------------------------------------------------------
# Binary loaders
# ---------------------------------------------------------------------------


def _read_be_u32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise DataFormatError(f"{path}: truncated header at offset {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(image_path: str, label_path: str) -> Dataset:
    """Parse a big-endian IDX image/label file pair into a dataset.

    Pixels are scaled by 1/255 and flattened row-major; the image layout is
    recorded so geometric augmentations can reshape rows.
    """
    with open(image_path, "rb") as fh:
        raw = fh.read()
    magic = _read_be_u32(raw, 0, image_path)
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(
            f"{image_path}: bad image magic 0x{magic:08x} at offset 0"
        )
    count = _read_be_u32(raw, 4, image_path)
    rows = _read_be_u32(raw, 8, image_path)
    cols = _read_be_u32(raw, 12, image_path)
    need = count * rows * cols
    if len(raw) - 16 != need:
        raise DataFormatError(
            f"{image_path}: expected {need} pixel bytes at offset 16, found {len(raw) - 16}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)

    with open(label_path, "rb") as fh:
        raw_labels = fh.read()
    magic = _read_be_u32(raw_labels, 0, label_path)
    if magic != IDX_LABEL_MAGIC:
        raise DataFormatError(
            f"{label_path}: bad label magic 0x{magic:08x} at offset 0"
        )
    label_count = _read_be_u32(raw_labels, 4, label_path)
    if len(raw_labels) - 8 != label_count:
        raise DataFormatError(
            f"{label_path}: expected {label_count} label bytes at offset 8, "
            f"found {len(raw_labels) - 8}"
        )
    if label_count != count:
        raise DataFormatError(
            f"{label_path}: {label_count} labels for {count} images (offset 4)"
        )
    labels = np.frombuffer(raw_labels, dtype=np.uint8, offset=8).astype(np.int64)
    num_classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(pixels / 255.0, labels, num_classes, image_shape=(rows, cols))


def load_cifar_bin(paths: Sequence[str]) -> Dataset:
    """Parse CIFAR-10 style binary batches (1 label byte + 3072 pixel bytes).

    Pixel bytes are channel-major on disk; rows are stored as flattened
    (32, 32, 3) images so augmentations see the spatial layout.
    """
    features = []
    labels = []
    for path in paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if not raw or len(raw) % CIFAR_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = records[:, 0].astype(np.int64)
        if batch_labels.max() > 9:
            bad = int(np.argmax(batch_labels > 9))
            raise DataFormatError(
                f"{path}: label {batch_labels[bad]} > 9 at offset {bad * CIFAR_RECORD_BYTES}"
            )
        pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        features.append(pixels.reshape(-1, 3072) / 255.0)
        labels.append(batch_labels)
    return Dataset(
        np.concatenate(features),
        np.concatenate(labels),
        num_classes=10,
        image_shape=(32, 32, 3),
    )


def save_npz(path: str, ds: Dataset) -> None:
    """Persist a dataset as a .npz archive (features, labels, num_classes)."""
    payload = {"features": ds.features, "num_classes": np.int64(ds.num_classes)}
    if ds.labels is not None:
        payload["labels"] = ds.labels
    if ds.image_shape is not None:
        payload["image_shape"] = np.asarray(ds.image_shape, dtype=np.int64)
    np.savez(path, **payload)


def load_npz(path: str) -> Dataset:
    with np.load(path) as archive:
        labels = archive["labels"] if "labels" in archive else None
        image_shape = (
            tuple(int(v) for v in archive["image_shape"]) if "image_shape" in archive else None
        )
        return Dataset(archive["features"], labels, int(archive["num_classes"]), image_shape)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def gen_synthetic(num_classes: int, dims: int, samples: int, spread: float, seed) -> Dataset:
    """Seeded Gaussian blobs, one centroid per class, clipped to [0, 1].

    Centroids sit on the vertices of a scaled simplex when dims allows it
    (coordinate j is hot for class j); otherwise they are spaced along the
    main diagonal. Class counts differ by at most one.
    """
    if num_classes < 2:
        raise InvalidInputError("need at least two classes")
    if samples < num_classes:
        raise InvalidInputError("need at least one sample per class")
    if dims < 1 or spread < 0:
        raise InvalidInputError("dims must be positive and spread nonnegative")
    rng = np.random.default_rng(seed)
    if dims >= num_classes:
        centroids = np.full((num_classes, dims), 0.1)
        centroids[np.arange(num_classes), np.arange(num_classes)] = 0.9
    else:
        levels = 0.1 + 0.8 * (np.arange(num_classes) + 0.5) / num_classes
        centroids = np.tile(levels[:, None], (1, dims))
    labels = rng.permutation(np.arange(samples) % num_classes)
    features = centroids[labels] + spread * rng.standard_normal((samples, dims))
    return Dataset(np.clip(features, 0.0, 1.0), labels, num_classes)


# ---------------------------------------------------------------------------
# Labeled/unlabeled splitting
# ---------------------------------------------------------------------------


def _largest_remainder_counts(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation of `total` proportional to `weights` (exact sum)."""
    quotas = weights / weights.sum() * total if weights.sum() > 0 else np.zeros_like(weights)
    counts = np.floor(quotas).astype(np.int64)
    remainder = total - counts.sum()
    if remainder > 0:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def stratified_sample_indices(labels: np.ndarray, n: int, num_classes: int, rng) -> np.ndarray:
    """Class-stratified draw of n indices, proportional to class frequency.

    Classes are visited in ascending order, each contributing a largest-
    remainder share capped at its size; any shortfall spills over to classes
    with spare samples.
    """
    labels = np.asarray(labels)
    if n > labels.size:
        raise InvalidInputError(f"cannot draw {n} from {labels.size} samples")
    class_counts = np.bincount(labels, minlength=num_classes)
    quotas = _largest_remainder_counts(class_counts.astype(float), n)
    overflow = np.maximum(quotas - class_counts, 0)
    quotas = np.minimum(quotas, class_counts)
    spill = int(overflow.sum())
    while spill > 0:
        spare = class_counts - quotas
        candidates = np.where(spare > 0)[0]
        take = candidates[np.argsort(-spare[candidates], kind="stable")[0]]
        quotas[take] += 1
        spill -= 1
    picked = []
    for cls in range(num_classes):
        if quotas[cls] == 0:
            continue
        members = np.where(labels == cls)[0]
        picked.append(rng.choice(members, size=quotas[cls], replace=False))
    if not picked:
        return np.array([], dtype=np.int64)
    return np.sort(np.concatenate(picked))


def split_labeled_unlabeled(ds: Dataset, n_labeled: int, seed) -> tuple[Dataset, Dataset]:
    """Class-stratified split: n_labeled rows keep labels, the rest lose them."""
    if ds.labels is None:
        raise InvalidInputError("splitting requires a labeled dataset")
    if n_labeled > len(ds):
        raise InvalidInputError(f"n_labeled {n_labeled} exceeds dataset size {len(ds)}")
    rng = np.random.default_rng(seed)
    keep = stratified_sample_indices(ds.labels, n_labeled, ds.num_classes, rng)
    rest = np.setdiff1d(np.arange(len(ds)), keep)
    return ds.subset(keep), ds.subset(rest).without_labels()


# ---------------------------------------------------------------------------
# Client partitioning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint per-client index lists covering a dataset exactly once.

    `seed` is the generator key the plan was drawn with: an integer, or a
    tuple of integers for derived streams.
    """

    assignments: tuple[tuple[int, ...], ...]
    mu: float | str
    seed: int | tuple[int, ...]

    def __post_init__(self):
        assignments = tuple(tuple(int(i) for i in shard) for shard in self.assignments)
        object.__setattr__(self, "assignments", assignments)
        if isinstance(self.seed, (list, tuple)):
            object.__setattr__(self, "seed", tuple(int(s) for s in self.seed))
        flat = [i for shard in assignments for i in shard]
        if len(flat) != len(set(flat)):
            raise InvalidInputError("partition assigns some index twice")

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    def to_json(self) -> str:
        seed = list(self.seed) if isinstance(self.seed, tuple) else self.seed
        return json.dumps(
            {
                "seed": seed,
                "mu": self.mu,
                "assignments": [list(shard) for shard in self.assignments],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        blob = json.loads(text)
        seed = blob["seed"]
        return cls(
            tuple(tuple(shard) for shard in blob["assignments"]),
            blob["mu"],
            tuple(seed) if isinstance(seed, list) else int(seed),
        )


def _repair_empty_clients(shards: list[list[int]]) -> None:
    """Move one sample from the largest shard into each empty one."""
    for k, shard in enumerate(shards):
        if shard:
            continue
        donor = max(range(len(shards)), key=lambda j: (len(shards[j]), -j))
        if len(shards[donor]) <= 1:
            raise InvalidInputError("not enough samples to give every client one")
        shard.append(shards[donor].pop())


def partition_dirichlet(ds: Dataset, num_clients: int, mu: float, seed: int) -> PartitionPlan:
    """Class-aware non-IID partition.

    For each class, client proportions are drawn from a symmetric Dirichlet
    with concentration `mu` and that class's samples are dealt accordingly
    (largest-remainder rounding). Clients left empty receive one sample from
    the largest shard.
    """
    if ds.labels is None:
        raise InvalidInputError("Dirichlet partitioning requires labels")
    if num_clients < 1:
        raise InvalidInputError("need at least one client")
    if len(ds) < num_clients:
        raise InvalidInputError("fewer samples than clients")
    if mu <= 0:
        raise InvalidInputError("Dirichlet concentration must be positive")
    rng = np.random.default_rng(seed)
    shards: list[list[int]] = [[] for _ in range(num_clients)]
    for cls in range(ds.num_classes):
        members = np.where(ds.labels == cls)[0]
        if members.size == 0:
            continue
        members = rng.permutation(members)
        proportions = rng.dirichlet(np.full(num_clients, mu))
        counts = _largest_remainder_counts(proportions, members.size)
        offset = 0
        for k in range(num_clients):
            shards[k].extend(members[offset : offset + counts[k]].tolist())
            offset += counts[k]
    _repair_empty_clients(shards)
    return PartitionPlan(tuple(tuple(sorted(s)) for s in shards), mu, seed)


def partition_iid(ds: Dataset, num_clients: int, seed: int) -> PartitionPlan:
    """Seeded shuffle plus round-robin deal; shard sizes differ by at most 1."""
    if num_clients < 1:
        raise InvalidInputError("need at least one client")
    if len(ds) < num_clients:
        raise InvalidInputError("fewer samples than clients")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    shards = [sorted(order[k::num_clients].tolist()) for k in range(num_clients)]
    return PartitionPlan(tuple(tuple(s) for s in shards), "iid", seed)


# ---------------------------------------------------------------------------
# Streaming sub-shards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamingShard:
    """A client shard cut into near-equal parts consumed one per round."""

    parts: tuple[tuple[int, ...], ...]

    def part_for_round(self, t: int) -> np.ndarray:
        return np.asarray(self.parts[t % len(self.parts)], dtype=np.int64)


def split_streaming(indices, seed, num_parts: int = STREAM_PARTS) -> StreamingShard:
    """One seeded shuffle, then a contiguous split into `num_parts` pieces."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size < num_parts:
        raise InvalidInputError(
            f"shard of {indices.size} cannot stream in {num_parts} parts"
        )
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(indices)
    parts = np.array_split(shuffled, num_parts)
    return StreamingShard(tuple(tuple(int(i) for i in part) for part in parts))


# ---------------------------------------------------------------------------
# Augmentations
# ---------------------------------------------------------------------------


def shift_image(x: np.ndarray, image_shape: tuple[int, ...], dy: int, dx: int) -> np.ndarray:
    """Translate a flattened image by (dy, dx) pixels with zero fill."""
    img = np.asarray(x, dtype=np.float64).reshape(image_shape)
    out = np.zeros_like(img)
    h, w = image_shape[0], image_shape[1]
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[dst_y, dst_x] = img[src_y, src_x]
    return out.reshape(-1)


def flip_image(x: np.ndarray, image_shape: tuple[int, ...]) -> np.ndarray:
    """Mirror a flattened image horizontally."""
    img = np.asarray(x, dtype=np.float64).reshape(image_shape)
    return img[:, ::-1].reshape(-1)


def add_noise(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Seeded Gaussian noise, clipped back into [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(x + sigma * rng.standard_normal(x.shape), 0.0, 1.0)


def augment(
    x: np.ndarray,
    kind: str,
    rng: np.random.Generator,
    *,
    image_shape: tuple[int, ...] | None = None,
    max_shift: int = 2,
    sigma: float = 0.1,
) -> np.ndarray:
    """Apply one named transform to a feature vector.

    shift: random (dy, dx) in [-max_shift, max_shift], zero fill. flip:
    horizontal mirror. noise: additive Gaussian then clip. shift and flip
    require an image layout.
    """
    if kind in ("shift", "flip"):
        if image_shape is None:
            raise InvalidInputError(f"{kind} augmentation needs an image layout")
        if kind == "flip":
            return flip_image(x, image_shape)
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        return shift_image(x, image_shape, int(dy), int(dx))
    if kind == "noise":
        return add_noise(x, sigma, rng)
    raise InvalidInputError(f"unknown augmentation {kind!r}")


def _rowwise(fn, inputs: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(inputs)
    return np.stack([fn(rows[i]) for i in range(rows.shape[0])])


def pair_augmenters(image_shape: tuple[int, ...] | None, noise_sigma: float = 0.1):
    """The two batch transforms used by the consistency term.

    Image data gets (random shift, horizontal flip); feature-only data gets
    two independent noise draws. Each returned callable maps
    (matrix, generator) to a matrix of the same shape.
    """
    if image_shape is not None:
        def first(inputs, rng):
            return _rowwise(lambda row: augment(row, "shift", rng, image_shape=image_shape), inputs)

        def second(inputs, rng):
            return _rowwise(lambda row: augment(row, "flip", rng, image_shape=image_shape), inputs)
    else:
        def first(inputs, rng):
            return add_noise(np.atleast_2d(inputs), noise_sigma, rng)

        def second(inputs, rng):
            return add_noise(np.atleast_2d(inputs), noise_sigma, rng)

    return first, second


def candidate_augmenter(image_shape: tuple[int, ...] | None, noise_sigma: float = 0.1):
    """Per-copy transform for the pseudo-label vote: a seeded coin picks
    shift or flip for image data; feature-only data gets noise."""
    if image_shape is None:
        def fn(inputs, rng):
            return add_noise(np.atleast_2d(inputs), noise_sigma, rng)
    else:
        def fn(inputs, rng):
            def per_row(row):
                kind = "shift" if rng.integers(0, 2) == 0 else "flip"
                return augment(row, kind, rng, image_shape=image_shape)

            return _rowwise(per_row, inputs)

    return fn
