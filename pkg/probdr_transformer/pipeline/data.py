"""
Labelled datasets and the big-endian IDX reader for MNIST-style image files.

IDX layout (all integers big-endian)::

    images: 0x00000803 | count | rows | cols | count*rows*cols unsigned bytes
    labels: 0x00000801 | count | count unsigned bytes
"""

import gzip
import struct
import typing
from dataclasses import dataclass

import torch
from loguru import logger

from probdr_transformer.exceptions import ConsistencyError, FormatError, InvalidInputError, InvalidParameterError
from probdr_transformer.linalg import DTYPE, as_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True)
class LabeledDataset:
    """
    Attributes:
    - features: (n, d) float64 matrix, one point per row.
    - labels: length-n ``torch.long`` vector with values in [0, n_classes).
    - source: human-readable origin, e.g. the file names or ``blobs(n=300, d=50)``.
    """

    features: torch.Tensor
    labels: torch.Tensor
    source: str

    def __post_init__(self):
        features = as_matrix(self.features, "features")
        labels = torch.as_tensor(self.labels, dtype=torch.long)
        if labels.dim() != 1 or labels.shape[0] != features.shape[0]:
            raise InvalidInputError(
                f"expected {features.shape[0]} labels, got shape {tuple(labels.shape)}"
            )
        if labels.numel() and int(labels.min()) < 0:
            raise InvalidInputError(f"labels must be non-negative, got {int(labels.min())}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.numel() else 0


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise FormatError(f"{path}: corrupt gzip stream ({e})")
    return raw


def _header(path: str, raw: bytes, expected_magic: int, n_dims: int) -> typing.Tuple[int, ...]:
    size = 4 * (1 + n_dims)
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: expected IDX magic 0x{expected_magic:08x}", observed=magic)
    if len(raw) < size:
        raise FormatError(f"{path}: truncated IDX header ({len(raw)} of {size} bytes)")
    return struct.unpack(f">{n_dims}I", raw[4:size])


def _payload(path: str, raw: bytes, offset: int, expected: int) -> bytes:
    available = len(raw) - offset
    if available < expected:
        raise FormatError(f"{path}: truncated IDX payload ({available} of {expected} bytes)")
    return raw[offset : offset + expected]


def read_idx_images(path: str) -> torch.Tensor:
    """Returns a (count, rows*cols) uint8 tensor, each image flattened row-major."""
    raw = _read_bytes(path)
    count, rows, cols = _header(path, raw, IDX_IMAGES_MAGIC, 3)
    pixels = _payload(path, raw, 16, count * rows * cols)
    if not pixels:
        return torch.zeros(count, rows * cols, dtype=torch.uint8)
    return torch.frombuffer(bytearray(pixels), dtype=torch.uint8).reshape(count, rows * cols)


def read_idx_labels(path: str) -> torch.Tensor:
    raw = _read_bytes(path)
    (count,) = _header(path, raw, IDX_LABELS_MAGIC, 1)
    labels = _payload(path, raw, 8, count)
    if not labels:
        return torch.zeros(0, dtype=torch.long)
    return torch.frombuffer(bytearray(labels), dtype=torch.uint8).to(torch.long)


def load_idx(images_path: str, labels_path: str, limit: typing.Optional[int] = None) -> LabeledDataset:
    """
    Loads an IDX image/label pair, scales pixels to [0, 1] and keeps the first ``limit`` items.

    Both files may be gzip-compressed.

    Raises:
        FormatError: On a wrong magic number (the observed value is reported) or a truncated file.
        ConsistencyError: If the two files hold a different number of items.
    """
    if limit is not None and limit < 1:
        raise InvalidParameterError(f"limit must be at least 1, got {limit}")
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    logger.info(f"Loaded {images.shape[0]} items of dimension {images.shape[1]} from {images_path}")
    return LabeledDataset(
        features=images.to(DTYPE) / 255.0,
        labels=labels,
        source=f"idx({images_path}, {labels_path})",
    )


def write_idx(images_path: str, labels_path: str, images: torch.Tensor, labels: torch.Tensor):
    """
    Writes uint8 ``images`` of shape (count, rows, cols) and ``labels`` of shape (count,)
    as an uncompressed IDX pair. Used to build small fixtures.
    """
    images = torch.as_tensor(images, dtype=torch.uint8)
    labels = torch.as_tensor(labels, dtype=torch.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        f.write(bytes(images.flatten().tolist()))
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(bytes(labels.tolist()))
