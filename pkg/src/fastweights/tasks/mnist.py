"""IDX (MNIST) binary file reader.

Format: big-endian uint32 magic (0x00000803 for images, 0x00000801 for
labels), the dimension sizes as big-endian uint32s, then raw uint8 data.
Pixels stay as bytes here; models divide by 255 at their input.
"""

from __future__ import annotations

import struct

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def _read_header(data: bytes, path: str, expected_magic: int, ndim: int):
    need = 4 * (1 + ndim)
    if len(data) < need:
        raise IdxTruncatedError(f"{path}: file too short for IDX header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise IdxMagicError(
            f"{path}: bad magic, expected {expected_magic:#010x}, found {magic:#010x}"
        )
    dims = struct.unpack(f">{ndim}I", data[4:need])
    return dims, data[need:]


def load_mnist_idx(images_path: str, labels_path: str) -> tuple[np.ndarray, np.ndarray]:
    """Load paired IDX image/label files as (count,28,28) and (count,) uint8."""
    with open(images_path, "rb") as f:
        raw = f.read()
    (count, rows, cols), body = _read_header(raw, images_path, IMAGES_MAGIC, 3)
    if len(body) != count * rows * cols:
        raise IdxTruncatedError(
            f"{images_path}: expected {count * rows * cols} pixel bytes, found {len(body)}"
        )
    images = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)

    with open(labels_path, "rb") as f:
        raw = f.read()
    (label_count,), body = _read_header(raw, labels_path, LABELS_MAGIC, 1)
    if len(body) != label_count:
        raise IdxTruncatedError(
            f"{labels_path}: expected {label_count} label bytes, found {len(body)}"
        )
    if label_count != count:
        raise IdxCountMismatchError(
            f"{images_path} has {count} images but {labels_path} has {label_count} labels"
        )
    labels = np.frombuffer(body, dtype=np.uint8)
    return images, labels
