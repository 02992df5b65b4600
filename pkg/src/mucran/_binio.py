"""Little-endian binary readers/writers shared by the dataset and checkpoint formats.

All multi-byte values are little-endian. Strings are UTF-8 with a u16 byte-length
prefix. Arrays are a u8 ndim, u32 dims, then raw element bytes. The reader tracks
its byte offset so truncation and garbage raise FormatError with a position.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError


class Writer:
    def __init__(self, fh: BinaryIO):
        self.fh = fh

    def bytes(self, b: bytes) -> None:
        self.fh.write(b)

    def u8(self, v: int) -> None:
        self.fh.write(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self.fh.write(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self.fh.write(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self.fh.write(struct.pack("<Q", v))

    def f64(self, v: float) -> None:
        self.fh.write(struct.pack("<d", v))

    def string(self, s: str) -> None:
        raw = s.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError("string too long for u16 length prefix")
        self.u16(len(raw))
        self.fh.write(raw)

    def array(self, arr: np.ndarray, dtype: np.dtype) -> None:
        arr = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<"))
        self.u8(arr.ndim)
        for d in arr.shape:
            self.u32(d)
        self.fh.write(arr.tobytes())


class Reader:
    def __init__(self, fh: BinaryIO):
        self.fh = fh
        self.offset = 0

    def _take(self, n: int) -> bytes:
        raw = self.fh.read(n)
        if len(raw) != n:
            raise FormatError(
                f"truncated file: wanted {n} bytes at offset {self.offset}, got {len(raw)}"
            )
        self.offset += n
        return raw

    def bytes(self, n: int) -> bytes:
        return self._take(n)

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def string(self) -> str:
        n = self.u16()
        return self._take(n).decode("utf-8")

    def array(self, dtype: np.dtype) -> np.ndarray:
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        dt = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape)) if shape else 1
        raw = self._take(count * dt.itemsize)
        return np.frombuffer(raw, dtype=dt).reshape(shape).astype(dtype)

    def expect_magic(self, magic: bytes, what: str) -> None:
        got = self._take(len(magic))
        if got != magic:
            raise FormatError(f"bad magic for {what}: wanted {magic!r}, got {got!r} at offset 0")
