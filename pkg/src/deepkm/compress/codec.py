"""DKMC compressed model files.

Layout (little-endian):
    b"DKMC" | u16 version | u16 layer_count | u32 header_len | header JSON
    | per layer: 4 x u32 dims (s, s, c, m) | u32 K | K*s float32 centers
      (center-major) | N indices, ceil(log2 K) bits each, MSB-first,
      padded to a byte
    | u32 passthrough_len | tensor block
    | u32 CRC32 of everything before it

The header carries the architecture, the share config, the source model
hash, the shared layer names in file order and their inertias.
"""

import json
import struct
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

from deepkm.cluster import Codebook
from deepkm.compress.reshape import LayerDims
from deepkm.compress.share import CompressedModel, SharedLayer
from deepkm.core.config import ShareConfig
from deepkm.core.exceptions import FormatError, UnsupportedVersionError
from deepkm.data.modelfile import MAGIC as MODEL_MAGIC
from deepkm.data.modelfile import (
    ByteReader,
    check_crc,
    decode_tensors,
    encode_tensors,
    params_to_tensors,
    tensors_to_params,
    with_crc,
)
from deepkm.nn.network import Architecture

MAGIC = b"DKMC"
VERSION = 1


def pack_indices(indices: NDArray[np.int64], bits: int) -> bytes:
    """Pack each index into ``bits`` bits, MSB-first, zero-padded to a byte."""
    if bits == 0 or indices.size == 0:
        return b""
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int64)
    bit_matrix = ((indices[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bit_matrix.ravel()).tobytes()


def unpack_indices(raw: bytes, n: int, bits: int) -> NDArray[np.int64]:
    if bits == 0:
        return np.zeros(n, dtype=np.int64)
    flat = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: n * bits]
    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.int64)
    return flat.reshape(n, bits).astype(np.int64) @ weights


def packed_size(n: int, bits: int) -> int:
    return (n * bits + 7) // 8


def _header(cm: CompressedModel) -> bytes:
    header = {
        "arch": cm.arch.model_dump(mode="json"),
        "share": cm.config.model_dump(mode="json"),
        "source_hash": cm.source_hash,
        "layers": list(cm.layers),
        "inertia": {name: layer.codebook.inertia for name, layer in cm.layers.items()},
        "zero_cluster": {name: layer.codebook.zero_cluster for name, layer in cm.layers.items()},
    }
    return json.dumps(header, sort_keys=True).encode()


def serialize_compressed(cm: CompressedModel) -> bytes:
    header = _header(cm)
    parts = [MAGIC, struct.pack("<HHI", VERSION, len(cm.layers), len(header)), header]
    for layer in cm.layers.values():
        cb = layer.codebook
        parts.append(struct.pack("<4II", *layer.dims, cb.k))
        # centers are stored s x K; write each center's s values contiguously
        parts.append(np.ascontiguousarray(cb.centers.T, dtype="<f4").tobytes())
        parts.append(pack_indices(cb.assignments, cb.index_bits))
    passthrough = encode_tensors(params_to_tensors(cm.passthrough_weights, cm.passthrough_biases))
    parts.append(struct.pack("<I", len(passthrough)))
    parts.append(passthrough)
    return with_crc(b"".join(parts))


def _parse_header(raw: bytes) -> dict:
    try:
        header = json.loads(raw)
        header["arch"] = Architecture.model_validate(header["arch"])
        header["share"] = ShareConfig.model_validate(header["share"])
    except (ValueError, KeyError, TypeError, ValidationError) as e:
        raise FormatError(f"invalid DKMC header: {e}") from e
    return header


def _read_layer(reader: ByteReader, name: str, header: dict) -> SharedLayer:
    s1, s2, c, m, k = reader.unpack("4II")
    dims = LayerDims(s1, s2, c, m)
    n = dims.n_columns
    if k < 1 or k > n:
        raise FormatError(f"layer {name}: K={k} outside [1, {n}]")
    raw = np.frombuffer(reader.take(4 * k * s2), dtype="<f4")
    centers = raw.reshape(k, s2).T.astype(np.float64)
    bits = (k - 1).bit_length()
    indices = unpack_indices(reader.take(packed_size(n, bits)), n, bits)
    if indices.size and indices.max() >= k:
        raise FormatError(f"layer {name}: cluster index {int(indices.max())} >= K={k}")
    codebook = Codebook(
        centers=np.ascontiguousarray(centers),
        assignments=indices,
        inertia=float(header.get("inertia", {}).get(name, 0.0)),
        zero_cluster=bool(header.get("zero_cluster", {}).get(name, False)),
    )
    return SharedLayer(codebook=codebook, dims=dims)


def deserialize_compressed(data: bytes) -> CompressedModel:
    reader = ByteReader(data)
    if reader.take(4) != MAGIC:
        raise FormatError(f"not a DKMC file (magic {data[:4]!r})")
    version, layer_count, header_len = reader.unpack("HHI")
    if version > VERSION:
        raise UnsupportedVersionError(f"DKMC version {version} is newer than supported {VERSION}")
    check_crc(data)
    header = _parse_header(reader.take(header_len))
    names = header.get("layers", [])
    if len(names) != layer_count:
        raise FormatError(f"header names {len(names)} layers, file has {layer_count}")

    layers = {name: _read_layer(reader, name, header) for name in names}
    (passthrough_len,) = reader.unpack("I")
    block = ByteReader(reader.take(passthrough_len))
    weights, biases = tensors_to_params(decode_tensors(block))
    if block.offset != passthrough_len or reader.offset != len(data) - 4:
        raise FormatError("trailing bytes before checksum")

    return CompressedModel(
        arch=header["arch"],
        layers=layers,
        passthrough_weights=weights,
        passthrough_biases=biases,
        config=header["share"],
        source_hash=str(header.get("source_hash", "")),
    )


def save_compressed(path: Path, cm: CompressedModel) -> None:
    path.write_bytes(serialize_compressed(cm))


def load_compressed(path: Path) -> CompressedModel:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    return deserialize_compressed(data)


def detect_kind(path: Path) -> str:
    """Return "model" or "compressed" from the file magic."""
    try:
        with open(path, "rb") as f:
            magic = f.read(4)
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    if magic == MODEL_MAGIC:
        return "model"
    if magic == MAGIC:
        return "compressed"
    raise FormatError(f"{path} is neither a DKMM nor a DKMC file (magic {magic!r})")
