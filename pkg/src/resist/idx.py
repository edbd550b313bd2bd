"""Reader for big-endian IDX image/label files (the MNIST distribution format)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class Truncated(IdxError):
    pass


class CountMismatch(IdxError):
    pass


def _read(path: str | Path, magic: int, header_dims: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    need = 4 + 4 * header_dims
    if len(raw) < need:
        raise Truncated(f"{path}: truncated header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise BadMagic(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{header_dims}I", raw[4:need])
    body = raw[need:]
    if len(body) < int(np.prod(dims)):
        raise Truncated(f"{path}: truncated file, {len(body)} of {int(np.prod(dims))} payload bytes")
    return dims, body


def load_idx(images_path: str | Path, labels_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Images flattened to rows scaled to [0, 1], and integer labels."""
    (n, rows, cols), body = _read(images_path, IMAGES_MAGIC, 3)
    (m,), lbody = _read(labels_path, LABELS_MAGIC, 1)
    if n != m:
        raise CountMismatch(f"count mismatch: {n} images but {m} labels")
    X = np.frombuffer(body, dtype=np.uint8, count=n * rows * cols).reshape(n, rows * cols) / 255.0
    y = np.frombuffer(lbody, dtype=np.uint8, count=m).astype(np.int64)
    return X, y


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path) -> None:
    """Write uint8 images of shape ``(n, rows, cols)`` and labels in IDX format."""
    imgs = np.asarray(images, dtype=np.uint8)
    n, rows, cols = imgs.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + imgs.tobytes())
    lab = np.asarray(labels, dtype=np.uint8)
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, len(lab)) + lab.tobytes())
