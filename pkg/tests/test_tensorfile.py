import struct

import numpy as np
import pytest

from asql import FormatError, read_tensor, write_tensor
from asql.tensorfile import MAGIC, VERSION


def round_trip(tmp_path, values):
    path = tmp_path / "t.tnsr"
    write_tensor(values, path)
    return read_tensor(path)


def test_float_round_trip_bit_exact(tmp_path):
    arr = np.array([[0.5, -1.25], [3.75, 1e-7]], dtype=np.float32)
    out = round_trip(tmp_path, arr)
    assert out.dtype == np.dtype("<f4")
    assert out.tobytes() == arr.tobytes()
    assert out.shape == (2, 2)


def test_float64_stored_as_float32(tmp_path):
    arr = np.array([1.0 / 3.0], dtype=np.float64)
    out = round_trip(tmp_path, arr)
    assert out.dtype == np.dtype("<f4")
    assert out[0] == np.float32(1.0 / 3.0)


def test_int_and_bool_round_trip(tmp_path):
    ints = round_trip(tmp_path, np.array([[1, -2], [3, 0]], dtype=np.int64))
    assert ints.dtype == np.dtype("<i4")
    assert ints.tolist() == [[1, -2], [3, 0]]
    bools = round_trip(tmp_path, np.array([True, False]))
    assert bools.dtype == np.dtype("<i4")
    assert bools.tolist() == [1, 0]


def test_rank3_header_bytes(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros((4, 2, 2), dtype=np.float32), path)
    blob = path.read_bytes()
    assert blob[:8] == b"ASQLTNSR"
    assert blob[8:12] == struct.pack("<I", VERSION)
    assert blob[12] == 1  # dtype code: float32
    assert blob[13] == 3  # rank
    assert blob[14:26] == bytes.fromhex("040000000200000002000000")
    assert len(blob) == 26 + 4 * 16


def test_high_rank_round_trip(tmp_path):
    arr = np.arange(2 ** 8, dtype=np.float32).reshape((2,) * 8)
    out = round_trip(tmp_path, arr)
    assert out.shape == (2,) * 8
    assert np.array_equal(out, arr)


def test_scalar_coerced_to_rank_one(tmp_path):
    out = round_trip(tmp_path, np.float32(1.5))
    assert out.shape == (1,)
    assert out[0] == 1.5


def test_rank_nine_rejected(tmp_path):
    with pytest.raises(FormatError, match="rank"):
        write_tensor(np.zeros((1,) * 9, dtype=np.float32), tmp_path / "t.tnsr")


def test_zero_dim_rejected(tmp_path):
    with pytest.raises(FormatError, match="dims"):
        write_tensor(np.zeros((2, 0), dtype=np.float32), tmp_path / "t.tnsr")


def test_complex_dtype_rejected(tmp_path):
    with pytest.raises(FormatError, match="dtype"):
        write_tensor(np.zeros(2, dtype=np.complex64), tmp_path / "t.tnsr")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros(2, dtype=np.float32), path)
    blob = bytearray(path.read_bytes())
    blob[:8] = b"BADMAGIC"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        read_tensor(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros(2, dtype=np.float32), path)
    blob = bytearray(path.read_bytes())
    blob[8:12] = struct.pack("<I", 2)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        read_tensor(path)


def test_unknown_dtype_code_rejected(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros(2, dtype=np.float32), path)
    blob = bytearray(path.read_bytes())
    blob[12] = 9
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="dtype"):
        read_tensor(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros((2, 2), dtype=np.float32), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        read_tensor(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.tnsr"
    write_tensor(np.zeros((2, 2), dtype=np.float32), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_tensor(path)


def test_result_is_writable_copy(tmp_path):
    out = round_trip(tmp_path, np.zeros((2, 2), dtype=np.float32))
    out[0, 0] = 5.0  # must not raise
    assert out[0, 0] == 5.0


def test_accepts_plain_lists(tmp_path):
    out = round_trip(tmp_path, [[1.5, 2.5], [3.5, 4.5]])
    assert out.dtype == np.dtype("<f4")
    assert out.tolist() == [[1.5, 2.5], [3.5, 4.5]]
