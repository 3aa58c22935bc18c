"""IDX container reader/writer and delimited numeric files."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

# type code -> big-endian element dtype
IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {dt: code for code, dt in IDX_TYPES.items()}


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def parse_idx(data: bytes, scale: bool | None = None) -> np.ndarray:
    """Decode an IDX byte string into a float64 array of the declared shape.

    Unsigned-byte payloads are mapped to [0, 1] when ``scale`` is true. The
    default scales only arrays of rank >= 2, so image files come back in
    [0, 1] while 1-d label files keep their integer values.
    """
    data = bytes(data)
    if len(data) < 4:
        raise IdxFormatError("file shorter than the 4-byte magic number", 0)
    zero1, zero2, code, ndim = data[0], data[1], data[2], data[3]
    if zero1 != 0 or zero2 != 0:
        raise IdxFormatError(f"bad magic number 0x{data[:4].hex()}", 0)
    if code not in IDX_TYPES:
        raise IdxFormatError(f"unsupported element type 0x{code:02x}", 2)
    if ndim == 0:
        raise IdxFormatError("zero dimensions declared", 3)
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IdxFormatError(f"truncated header: {ndim} dimensions declared", len(data))
    shape = struct.unpack(f">{ndim}I", data[4:header_end])
    dtype = IDX_TYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = data[header_end:]
    if len(payload) < expected:
        raise IdxFormatError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}", header_end + len(payload)
        )
    if len(payload) > expected:
        raise IdxFormatError(f"{len(payload) - expected} trailing bytes after payload", header_end + expected)
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)
    if scale is None:
        scale = len(shape) >= 2
    if scale and code == 0x08:
        arr /= 255.0
    return arr


def read_idx(path, scale: bool | None = None) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        import gzip

        raw = gzip.decompress(raw)
    return parse_idx(raw, scale)


def encode_idx(arr: np.ndarray, dtype=">u1") -> bytes:
    dtype = np.dtype(dtype)
    if dtype not in _CODES:
        raise ValueError(f"dtype {dtype} has no IDX type code")
    arr = np.asarray(arr)
    header = bytes([0, 0, _CODES[dtype], arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.astype(dtype).tobytes()


def write_idx(path, arr: np.ndarray, dtype=">u1") -> None:
    Path(path).write_bytes(encode_idx(arr, dtype))


def load_delimited(path, delimiter: str = ",", skip_header: int = 0):
    """Read one example per row with the class label in the last column."""
    table = np.loadtxt(path, delimiter=delimiter, skiprows=skip_header, ndmin=2, dtype=np.float64)
    if table.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column plus a label column")
    labels = table[:, -1]
    if not np.all(labels == np.round(labels)) or labels.min() < 0:
        raise ValueError(f"{path}: last column must hold non-negative integer labels")
    return table[:, :-1], labels.astype(np.int64)
