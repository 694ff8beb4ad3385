"""Bit-exact little-endian tensor files for cross-language interchange.

Layout: 8-byte magic ``ASQLTNSR``, u32 version (=1), u8 dtype code
(1 = float32, 2 = int32), u8 rank, rank u32 dims, then the row-major
payload with no padding.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"ASQLTNSR"
VERSION = 1
MAX_RANK = 8

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<i4")}


def _storage_dtype(arr: np.ndarray) -> tuple[int, np.dtype]:
    kind = arr.dtype.kind
    if kind == "f":
        return 1, _DTYPE_BY_CODE[1]
    if kind in "iub":
        return 2, _DTYPE_BY_CODE[2]
    raise FormatError(f"unsupported dtype {arr.dtype}")


def write_tensor(values, path) -> None:
    """Write an array (floats stored as f32, integers as i32)."""
    arr = np.ascontiguousarray(values)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise FormatError(f"rank must be in [1, {MAX_RANK}], got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise FormatError(f"dims must all be >= 1, got {arr.shape}")
    code, dtype = _storage_dtype(arr)
    header = MAGIC + struct.pack("<IBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.astype(dtype, copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a tensor file; returns float32 or int32 exactly as stored."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 6:
        raise FormatError(f"truncated header ({len(blob)} bytes)")
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {blob[:len(MAGIC)]!r}")
    version, code, rank = struct.unpack_from("<IBB", blob, len(MAGIC))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in _DTYPE_BY_CODE:
        raise FormatError(f"unknown dtype code {code}")
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"rank must be in [1, {MAX_RANK}], got {rank}")
    offset = len(MAGIC) + 6
    if len(blob) < offset + 4 * rank:
        raise FormatError("truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    if any(d < 1 for d in dims):
        raise FormatError(f"dims must all be >= 1, got {dims}")
    offset += 4 * rank
    dtype = _DTYPE_BY_CODE[code]
    count = int(np.prod(dims))
    expected = offset + count * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(
            f"payload length {len(blob) - offset}, expected {expected - offset}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(dims).copy()
