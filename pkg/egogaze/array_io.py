# egogaze/array_io.py
"""
EGC1 flat float32 container.

Layout: b"EGC1" | u32 rank | u32 dims[rank] | zero pad to a multiple of 16
bytes | little-endian float32 payload. Rank <= 2 gives exactly 16 bytes of
header.
"""

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"EGC1"
_ALIGN = 16


def header_size(rank: int) -> int:
    raw = 8 + 4 * rank
    return ((raw + _ALIGN - 1) // _ALIGN) * _ALIGN


def encode_array(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f4")
    head = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    head = head.ljust(header_size(a.ndim), b"\x00")
    return head + a.tobytes()


def decode_array(buf: Union[bytes, memoryview], offset: int = 0):
    """Decode one block starting at `offset`; returns (array, next_offset)."""
    if bytes(buf[offset:offset + 4]) != MAGIC:
        raise ValueError("bad magic: not an EGC1 array")
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    if rank > 16:
        raise ValueError(f"corrupt header: rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    start = offset + header_size(rank)
    count = int(np.prod(dims)) if rank else 1
    end = start + 4 * count
    if end > len(buf):
        raise ValueError(f"truncated payload: need {end - start} bytes, have {len(buf) - start}")
    arr = np.frombuffer(bytes(buf[start:end]), dtype="<f4").reshape(dims)
    return arr.astype(np.float32), end


def write_array(path: Union[str, Path], arr: np.ndarray):
    Path(path).write_bytes(encode_array(arr))


def read_array(path: Union[str, Path]) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_array(buf)
    if end != len(buf):
        raise ValueError(f"{path}: {len(buf) - end} trailing bytes")
    return arr


def write_block(fh: BinaryIO, arr: np.ndarray) -> int:
    data = encode_array(arr)
    fh.write(data)
    return len(data)
