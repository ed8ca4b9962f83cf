"""Row-wise parameter sharing, compression ratio and the DKMC codec."""

from deepkm.compress.codec import load_compressed, save_compressed
from deepkm.compress.reshape import LayerDims, reshape_rows, unreshape_rows
from deepkm.compress.share import (
    CompressedModel,
    SharedLayer,
    allocate_k,
    compression_ratio,
    compression_ratio_for,
    reconstruct,
    share,
)

__all__ = [
    "CompressedModel",
    "LayerDims",
    "SharedLayer",
    "allocate_k",
    "compression_ratio",
    "compression_ratio_for",
    "load_compressed",
    "reconstruct",
    "reshape_rows",
    "save_compressed",
    "share",
    "unreshape_rows",
]
