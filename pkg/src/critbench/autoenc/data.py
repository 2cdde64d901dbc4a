"""Training data: seeded synthetic images and an IDX (MNIST-format) reader."""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803


def synthetic_images(rng: np.random.Generator, n: int, side: int, max_bumps: int = 3,
                     width_range=(0.6, 2.0)) -> np.ndarray:
    """``n`` flattened ``side x side`` images built from axis-aligned Gaussian bumps.

    Each image holds 1..max_bumps bumps with independent row/column widths; the
    result is clipped to ``[0, 1]``.
    """
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    out = np.zeros((n, side * side))
    for i in range(n):
        img = np.zeros((side, side))
        for _ in range(int(rng.integers(1, max_bumps + 1))):
            r0, c0 = rng.uniform(0, side - 1, size=2)
            wr, wc = rng.uniform(*width_range, size=2)
            amp = rng.uniform(0.5, 1.0)
            img += amp * np.exp(-0.5 * (((rr - r0) / wr) ** 2 + ((cc - c0) / wc) ** 2))
        out[i] = np.clip(img, 0.0, 1.0).ravel()
    return out


def train_test_split(rng: np.random.Generator, side: int, n_train: int = 5500, n_test: int = 1000):
    data = synthetic_images(rng, n_train + n_test, side)
    return data[:n_train], data[n_train:]


def read_idx_images(path, crop: int = 0) -> np.ndarray:
    """Read an IDX image file (optionally gzipped) into ``(n, rows*cols)`` floats in [0, 1].

    ``crop`` removes that many pixels from every side, e.g. ``crop=3`` turns
    28x28 digits into 22x22.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    images = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    images = images.reshape(n, rows, cols).astype(float) / 255.0
    if crop:
        if 2 * crop >= min(rows, cols):
            raise ValueError("crop removes the whole image")
        images = images[:, crop:rows - crop, crop:cols - crop]
    return images.reshape(n, -1)


def write_idx_images(path, images) -> None:
    """Write a ``(n, rows, cols)`` uint8 array in IDX format (used for fixtures)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


class MinibatchSampler:
    """Seeded per-epoch shuffling; each call returns the next batch of row indices."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if batch_size < 1 or batch_size > n:
            raise ValueError("batch size must lie in [1, n]")
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx
