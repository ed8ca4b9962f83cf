"""IDX (MNIST) file reader.

Format (big-endian):
    u32   magic    0x00000803 images (3 dims) / 0x00000801 labels (1 dim)
    u32   size of each dimension
    u8[]  row-major payload
"""

import gzip
import struct
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from deepkm.core.exceptions import FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_MAGIC_BY_KIND = {"images": IMAGES_MAGIC, "labels": LABELS_MAGIC}


def parse_idx(raw: bytes, kind: Literal["images", "labels"] | None = None) -> NDArray[np.uint8]:
    if len(raw) < 4:
        raise FormatError(f"IDX header truncated ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise FormatError(f"bad IDX magic 0x{magic:08x}")
    if kind is not None and magic != _MAGIC_BY_KIND[kind]:
        raise FormatError(
            f"bad IDX magic 0x{magic:08x} for {kind} (expected 0x{_MAGIC_BY_KIND[kind]:08x})"
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"IDX header truncated ({len(raw)} of {header_len} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[header_len:]
    if len(payload) < expected:
        raise FormatError(f"IDX payload truncated: {len(payload)} of {expected} bytes")
    return np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(dims).copy()


def load_idx(path: Path, kind: Literal["images", "labels"] | None = None) -> NDArray[np.uint8]:
    """Parse an IDX file (optionally gzip-compressed) into a uint8 array."""
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    try:
        return parse_idx(raw, kind)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e
