"""
MNIST ingestion - IDX decoding, subsampling and visible-vector encoding.

The IDX layout (big endian):

    images: u32 magic 2051 | u32 count | u32 rows | u32 cols | u8 pixels...
    labels: u32 magic 2049 | u32 count | u8 labels...

Pixels are rescaled by 1/255 into [0, 1] and kept real valued. A 794-unit
augmented vector appends a one-hot label block to the 784 pixel units.
"""

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, TypedDict

import numpy as np

from ..core.errors import ChecksumMismatchError, DataError, IDXFormatError
from ..core.logging import get_logger
from ..core.seeding import make_rng

logger = get_logger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
IMAGE_SIDE = 28
PIXEL_COUNT = IMAGE_SIDE * IMAGE_SIDE
LABEL_COUNT = 10
VISIBLE_COUNT = PIXEL_COUNT + LABEL_COUNT

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ImageSample:
    """One 28x28 image with its digit label."""
    pixels: np.ndarray
    label: int

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1)
        if pixels.shape[0] != PIXEL_COUNT:
            raise DataError(f"expected {PIXEL_COUNT} pixels, got {pixels.shape[0]}")
        if np.any(pixels < 0.0) or np.any(pixels > 1.0):
            raise DataError("pixel intensities must lie in [0, 1]")
        if not 0 <= int(self.label) <= 9:
            raise DataError(f"label out of range: {self.label}")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class Dataset:
    """
    An ordered, immutable collection of samples.

    Stored column-wise: ``images`` is (n, 784) float64 and ``labels`` is (n,)
    int64. Iterating yields ImageSample views.
    """
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 2 or images.shape[1] != PIXEL_COUNT:
            raise DataError(f"images must have shape (n, {PIXEL_COUNT}), got {images.shape}")
        if images.shape[0] == 0:
            raise DataError("dataset must not be empty")
        if images.shape[0] != labels.shape[0]:
            raise DataError("image and label counts differ")
        if images.min() < 0.0 or images.max() > 1.0:
            raise DataError("pixel intensities must lie in [0, 1]")
        if labels.min() < 0 or labels.max() > 9:
            raise DataError("labels must lie in [0, 9]")
        if self.split not in SPLITS:
            raise DataError(f"unknown split: {self.split}")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __getitem__(self, index: int) -> ImageSample:
        return ImageSample(self.images[index], int(self.labels[index]))

    def __iter__(self) -> Iterator[ImageSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> List[ImageSample]:
        return list(self)

    def take(self, indices: np.ndarray) -> "Dataset":
        """Dataset restricted to ``indices`` in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.split, dict(self.source))

    def label_histogram(self) -> List[int]:
        return np.bincount(self.labels, minlength=LABEL_COUNT).tolist()


class DatasetManifest(TypedDict):
    """Provenance record for a loaded (and possibly subsampled) dataset."""
    images_path: str
    labels_path: str
    images_sha256: str
    labels_sha256: str
    split: str
    count: int
    label_histogram: List[int]
    subsample: Optional[dict]


# ==================== IDX decoding ====================

def _read_bytes(path: Path) -> bytes:
    if not path.exists():
        raise DataError(f"file not found: {path}")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _read_header(data: bytes, path: Path, words: int, magic: int) -> tuple:
    size = 4 * words
    if len(data) < size:
        raise IDXFormatError("truncated header", str(path), len(data))
    values = struct.unpack(f">{words}I", data[:size])
    if values[0] != magic:
        raise IDXFormatError(f"bad magic number {values[0]}, expected {magic}", str(path), 0)
    return values


def read_idx_images(path: str | Path) -> np.ndarray:
    """Decode an IDX image file into a (count, rows*cols) uint8 array."""
    path = Path(path)
    data = _read_bytes(path)
    _, count, rows, cols = _read_header(data, path, 4, IMAGE_MAGIC)
    if rows * cols != PIXEL_COUNT:
        raise IDXFormatError(f"unsupported image shape {rows}x{cols}", str(path), 8)
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise IDXFormatError(
            f"truncated pixel data: need {expected} bytes, have {len(data)}", str(path), len(data)
        )
    if len(data) > expected:
        raise IDXFormatError("trailing bytes after pixel data", str(path), expected)
    return np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows * cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    """Decode an IDX label file into a (count,) uint8 array."""
    path = Path(path)
    data = _read_bytes(path)
    _, count = _read_header(data, path, 2, LABEL_MAGIC)
    expected = 8 + count
    if len(data) < expected:
        raise IDXFormatError(
            f"truncated label data: need {expected} bytes, have {len(data)}", str(path), len(data)
        )
    if len(data) > expected:
        raise IDXFormatError("trailing bytes after label data", str(path), expected)
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise IDXFormatError(f"label value {labels[bad[0]]} out of range", str(path), 8 + int(bad[0]))
    return labels


def load_idx(images_path: str | Path, labels_path: str | Path, split: str = "train") -> Dataset:
    """
    Load an MNIST image/label IDX pair.

    Args:
        images_path: IDX file with magic 2051 (optionally gzip compressed)
        labels_path: IDX file with magic 2049
        split: "train" or "test"

    Returns:
        Dataset with pixels rescaled into [0, 1]

    Raises:
        IDXFormatError: bad magic, truncation or count mismatch (with offset)
    """
    raw_images = read_idx_images(images_path)
    raw_labels = read_idx_labels(labels_path)
    if raw_images.shape[0] != raw_labels.shape[0]:
        # both counts live at byte offset 4 of their files
        raise IDXFormatError(
            f"image count {raw_images.shape[0]} != label count {raw_labels.shape[0]}",
            str(labels_path),
            4,
        )
    source = {"images_path": str(images_path), "labels_path": str(labels_path)}
    ds = Dataset(raw_images.astype(np.float64) / 255.0, raw_labels, split, source)
    logger.info("Loaded IDX dataset", images=str(images_path), count=len(ds), split=split)
    return ds


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path):
    """Encode uint8 images (n, 784) or (n, 28, 28) and labels (n,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), PIXEL_COUNT)
    labels = np.asarray(labels, dtype=np.uint8)
    header = struct.pack(">4I", IMAGE_MAGIC, images.shape[0], IMAGE_SIDE, IMAGE_SIDE)
    Path(images_path).write_bytes(header + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, labels.shape[0]) + labels.tobytes())


def to_bytes(ds: Dataset) -> np.ndarray:
    """Inverse of the 1/255 rescaling (exact for datasets loaded from IDX)."""
    return np.rint(ds.images * 255.0).astype(np.uint8)


# ==================== Sampling and encoding ====================

def subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    """
    Draw ``n`` samples uniformly without replacement.

    The draw is a prefix of a PCG64 permutation, so it replays across
    platforms for a fixed seed.
    """
    if not 1 <= n <= len(ds):
        raise DataError(f"subsample size {n} outside [1, {len(ds)}]")
    order = make_rng(seed).permutation(len(ds))[:n]
    out = ds.take(order)
    out.source["subsample"] = {"n": n, "seed": seed, "selection": "uniform"}
    return out


def split_disjoint(ds: Dataset, n_first: int, n_second: int, seed: int) -> tuple[Dataset, Dataset]:
    """Two disjoint uniform draws from one dataset (e.g. train and held-out eval)."""
    if n_first < 1 or n_second < 1 or n_first + n_second > len(ds):
        raise DataError(f"cannot split {len(ds)} samples into {n_first} + {n_second}")
    order = make_rng(seed).permutation(len(ds))
    return ds.take(order[:n_first]), ds.take(order[n_first:n_first + n_second])


def augment(s: ImageSample, hide_label: bool = False) -> np.ndarray:
    """Encode a sample as a 794-unit visible vector (pixels then one-hot label)."""
    units = np.zeros(VISIBLE_COUNT, dtype=np.float64)
    units[:PIXEL_COUNT] = s.pixels
    if not hide_label:
        units[PIXEL_COUNT + s.label] = 1.0
    return units


def augment_batch(ds: Dataset, hide_label: bool = False) -> np.ndarray:
    """Row-wise ``augment`` over a whole dataset, shape (n, 794)."""
    units = np.zeros((len(ds), VISIBLE_COUNT), dtype=np.float64)
    units[:, :PIXEL_COUNT] = ds.images
    if not hide_label:
        units[np.arange(len(ds)), PIXEL_COUNT + ds.labels] = 1.0
    return units


def binarize(units: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Stochastic binarization: each unit is on with its intensity as probability."""
    return (rng.random(units.shape) < units).astype(np.float64)


# ==================== Provenance ====================

def file_checksum(path: str | Path) -> str:
    """SHA-256 of the file bytes as stored on disk."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def verify_checksum(path: str | Path, expected: str):
    actual = file_checksum(path)
    if actual.lower() != expected.lower():
        raise ChecksumMismatchError(f"checksum mismatch for {path}: expected {expected}, got {actual}")


def build_manifest(ds: Dataset) -> DatasetManifest:
    images_path = ds.source.get("images_path", "")
    labels_path = ds.source.get("labels_path", "")
    return {
        "images_path": images_path,
        "labels_path": labels_path,
        "images_sha256": file_checksum(images_path) if images_path else "",
        "labels_sha256": file_checksum(labels_path) if labels_path else "",
        "split": ds.split,
        "count": len(ds),
        "label_histogram": ds.label_histogram(),
        "subsample": ds.source.get("subsample"),
    }
