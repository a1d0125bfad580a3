"""Formato binario PTN1"""

import numpy as np
import pytest

from src.utils.tensor_io import (
    MAGIC,
    TensorFormatError,
    decode_tensor,
    encode_tensor,
    read_tensor,
    write_tensor,
)


class TestTensorIO:
    def test_header_layout(self):
        blob = encode_tensor(np.zeros((2, 3)))
        assert blob[:4] == MAGIC
        assert np.frombuffer(blob, dtype="<u4", count=3, offset=4).tolist() == [2, 2, 3]
        assert len(blob) == 4 + 4 * 3 + 8 * 6

    def test_file_roundtrip_preserves_values_and_shape(self, tmp_path, rng):
        values = rng.normal(size=(2, 3, 4))
        path = write_tensor(tmp_path / "sub" / "x.ptn", values)
        restored = read_tensor(path)
        assert restored.shape == (2, 3, 4)
        np.testing.assert_array_equal(restored, values)

    def test_scalar_rank_zero(self):
        restored = decode_tensor(encode_tensor(np.array(3.5)))
        assert restored.shape == ()
        assert float(restored) == 3.5

    def test_scalar_header_has_no_dims(self):
        blob = encode_tensor(np.array(-2.0))
        assert np.frombuffer(blob, dtype="<u4", count=1, offset=4).tolist() == [0]
        assert len(blob) == 4 + 4 + 8

    def test_non_contiguous_input_is_written_row_major(self):
        values = np.arange(6.0).reshape(2, 3).T
        restored = decode_tensor(encode_tensor(values))
        assert restored.shape == (3, 2)
        np.testing.assert_array_equal(restored, values)

    def test_bad_magic(self):
        with pytest.raises(TensorFormatError, match="Magic"):
            decode_tensor(b"XXXX" + bytes(8))

    def test_truncated_payload(self):
        blob = encode_tensor(np.ones(4))
        with pytest.raises(TensorFormatError):
            decode_tensor(blob[:-8])
