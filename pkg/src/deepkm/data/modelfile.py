"""DKMM model files.

Layout (little-endian):
    b"DKMM" | u16 major | u16 minor | u32 arch_len | architecture JSON
    | tensor block | u32 CRC32 of everything before it

Tensor block: u32 count, then per tensor u16 name_len | name | u8 ndim
| ndim x u32 dims | float32 data.
"""

import struct
import zlib
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

from deepkm.core.exceptions import (
    ContractViolation,
    CorruptionError,
    FormatError,
    UnsupportedVersionError,
)
from deepkm.nn.network import Architecture, ModelParams

MAGIC = b"DKMM"
VERSION_MAJOR = 1
VERSION_MINOR = 0


class ByteReader:
    """Sequential struct reader that reports truncation as FormatError."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"file truncated at byte {self.offset} (wanted {n} more)")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def encode_tensors(tensors: dict[str, NDArray[np.float64]]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_tensors(reader: ByteReader) -> dict[str, NDArray[np.float64]]:
    (count,) = reader.unpack("I")
    tensors = {}
    for _ in range(count):
        (name_len,) = reader.unpack("H")
        name = reader.take(name_len).decode()
        (ndim,) = reader.unpack("B")
        dims = reader.unpack(f"{ndim}I")
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(reader.take(4 * size), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float64)
    return tensors


def params_to_tensors(weights: dict, biases: dict) -> dict[str, NDArray[np.float64]]:
    tensors = {f"{name}.weight": w for name, w in weights.items()}
    tensors.update({f"{name}.bias": b for name, b in biases.items()})
    return tensors


def tensors_to_params(tensors: dict[str, NDArray[np.float64]]) -> tuple[dict, dict]:
    weights, biases = {}, {}
    for key, array in tensors.items():
        name, _, kind = key.rpartition(".")
        if kind == "weight":
            weights[name] = array
        elif kind == "bias":
            biases[name] = array
        else:
            raise FormatError(f"unknown tensor {key}")
    return weights, biases


def check_crc(data: bytes) -> None:
    if len(data) < 4:
        raise FormatError("file too short for a checksum")
    (stored,) = struct.unpack("<I", data[-4:])
    actual = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored != actual:
        raise CorruptionError(f"CRC mismatch: stored 0x{stored:08x}, computed 0x{actual:08x}")


def with_crc(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def parse_architecture(raw: bytes) -> Architecture:
    try:
        return Architecture.model_validate_json(raw)
    except ValidationError as e:
        raise FormatError(f"invalid architecture block: {e}") from e


def serialize_model(model: ModelParams) -> bytes:
    arch = model.arch.model_dump_json().encode()
    payload = (
        MAGIC
        + struct.pack("<HHI", VERSION_MAJOR, VERSION_MINOR, len(arch))
        + arch
        + encode_tensors(params_to_tensors(model.weights, model.biases))
    )
    return with_crc(payload)


def deserialize_model(data: bytes) -> ModelParams:
    reader = ByteReader(data)
    if reader.take(4) != MAGIC:
        raise FormatError(f"not a DKMM file (magic {data[:4]!r})")
    major, _minor, arch_len = reader.unpack("HHI")
    if major > VERSION_MAJOR:
        raise UnsupportedVersionError(
            f"DKMM version {major} is newer than supported {VERSION_MAJOR}"
        )
    check_crc(data)
    arch = parse_architecture(reader.take(arch_len))
    weights, biases = tensors_to_params(decode_tensors(reader))
    if reader.offset != len(data) - 4:
        raise FormatError("trailing bytes before checksum")
    try:
        return ModelParams(arch=arch, weights=weights, biases=biases)
    except ContractViolation as e:
        raise FormatError(f"parameters do not match the architecture: {e}") from e


def save_model(path: Path, model: ModelParams) -> None:
    path.write_bytes(serialize_model(model))


def load_model(path: Path) -> ModelParams:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    return deserialize_model(data)
