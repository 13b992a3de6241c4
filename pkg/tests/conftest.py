"""Shared helpers: an independent IDX writer and small dataset builders.

The IDX writer here is deliberately separate from anything in the package so
loader tests compare against bytes assembled by hand.
"""

import gzip
import struct
from pathlib import Path

import numpy as np
import pytest


def pack_idx_images(images: np.ndarray) -> bytes:
    """Encode a (n, h, w) uint8 array as IDX image bytes, big-endian header."""
    n, h, w = images.shape
    header = struct.pack(">IIII", 0x00000803, n, h, w)
    return header + images.astype(np.uint8).tobytes()


def pack_idx_labels(labels: np.ndarray) -> bytes:
    header = struct.pack(">II", 0x00000801, labels.shape[0])
    return header + labels.astype(np.uint8).tobytes()


def write_pair(tmp_path: Path, images: np.ndarray, labels: np.ndarray, gz: bool = False):
    """Write an images/labels IDX pair to tmp_path, optionally gzipped."""
    suffix = ".gz" if gz else ""
    ipath = tmp_path / f"images-idx3-ubyte{suffix}"
    lpath = tmp_path / f"labels-idx1-ubyte{suffix}"
    opener = gzip.open if gz else open
    with opener(ipath, "wb") as fh:
        fh.write(pack_idx_images(images))
    with opener(lpath, "wb") as fh:
        fh.write(pack_idx_labels(labels))
    return ipath, lpath


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
