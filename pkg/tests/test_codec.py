"""Tests for the DKMC compressed model format."""

import numpy as np
import pytest

from deepkm.compress import codec
from deepkm.compress.codec import (
    deserialize_compressed,
    detect_kind,
    load_compressed,
    pack_indices,
    packed_size,
    save_compressed,
    serialize_compressed,
    unpack_indices,
)
from deepkm.compress.share import reconstruct, share
from deepkm.core.config import ShareConfig
from deepkm.core.exceptions import CorruptionError, FormatError, UnsupportedVersionError
from deepkm.data.modelfile import save_model


@pytest.fixture
def compressed(small_lenet):
    return share(small_lenet, ShareConfig(cluster_rate=0.1, sparsity_p=[0.0, 0.1]), seed=2)


class TestIndexPacking:
    def test_single_index_is_msb_first(self):
        assert pack_indices(np.array([1]), 3) == b"\x20"

    def test_packed_size(self):
        assert packed_size(480, 6) == 360
        assert packed_size(30, 0) == 0
        assert packed_size(5, 3) == 2

    def test_unpack_inverts_pack(self, rng):
        indices = rng.integers(0, 48, size=481)
        raw = pack_indices(indices, 6)
        assert len(raw) == packed_size(481, 6)
        np.testing.assert_array_equal(unpack_indices(raw, 481, 6), indices)

    def test_zero_bits(self):
        assert pack_indices(np.zeros(9, dtype=np.int64), 0) == b""
        np.testing.assert_array_equal(unpack_indices(b"", 9, 0), np.zeros(9))


class TestCompressedFile:
    def test_reserialize_is_byte_identical(self, compressed):
        data = serialize_compressed(compressed)
        assert serialize_compressed(deserialize_compressed(data)) == data

    def test_loaded_model_reconstructs_at_float32(self, compressed):
        loaded = deserialize_compressed(serialize_compressed(compressed))
        original = reconstruct(compressed)
        restored = reconstruct(loaded)
        for name, w in original.weights.items():
            expected = w.astype(np.float32).astype(np.float64)
            np.testing.assert_array_equal(restored.weights[name], expected)
        assert loaded.source_hash == compressed.source_hash
        assert loaded.config == compressed.config
        assert loaded.layers["conv2"].codebook.zero_cluster

    def test_flipped_byte_is_corruption(self, compressed):
        data = bytearray(serialize_compressed(compressed))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(CorruptionError):
            deserialize_compressed(bytes(data))

    def test_newer_version_rejected(self, compressed):
        data = bytearray(serialize_compressed(compressed))
        data[4:6] = (2).to_bytes(2, "little")
        with pytest.raises(UnsupportedVersionError):
            deserialize_compressed(bytes(data))

    def test_bad_magic(self, compressed):
        data = b"XXXX" + serialize_compressed(compressed)[4:]
        with pytest.raises(FormatError, match="not a DKMC"):
            deserialize_compressed(data)

    def test_truncated(self, compressed):
        with pytest.raises(FormatError):
            deserialize_compressed(serialize_compressed(compressed)[:40])

    def test_index_out_of_range(self, small_lenet, monkeypatch):
        # K = 3 uses 2 bits, so index 3 is encodable but invalid
        config = ShareConfig(cluster_rate=0.1, first_layer_rate=0.1, only_layer="conv1")
        cm = share(small_lenet, config)
        assert cm.layers["conv1"].codebook.k == 3
        real_pack = codec.pack_indices

        def pack_bad(indices, bits):
            bad = indices.copy()
            bad[0] = 3
            return real_pack(bad, bits)

        monkeypatch.setattr(codec, "pack_indices", pack_bad)
        data = serialize_compressed(cm)
        monkeypatch.undo()
        with pytest.raises(FormatError, match="cluster index 3"):
            deserialize_compressed(data)


class TestFiles:
    def test_save_and_load(self, compressed, tmp_path):
        path = tmp_path / "model.dkmc"
        save_compressed(path, compressed)
        assert load_compressed(path).layers.keys() == compressed.layers.keys()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read"):
            load_compressed(tmp_path / "absent.dkmc")

    def test_detect_kind(self, compressed, small_lenet, tmp_path):
        save_compressed(tmp_path / "a.dkmc", compressed)
        save_model(tmp_path / "b.dkmm", small_lenet)
        (tmp_path / "c.bin").write_bytes(b"JUNKJUNK")
        assert detect_kind(tmp_path / "a.dkmc") == "compressed"
        assert detect_kind(tmp_path / "b.dkmm") == "model"
        with pytest.raises(FormatError, match="neither"):
            detect_kind(tmp_path / "c.bin")
