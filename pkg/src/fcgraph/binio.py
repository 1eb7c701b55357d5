"""Raw little-endian f64 matrix container.

Layout: 4-byte ASCII magic, u32 version, u64 rows, u64 cols, then
rows*cols f64 values row-major. Bit-exact for finite doubles and trivially
parseable from any language. The magic distinguishes payload kinds
("NGTS" time series, "NGCM" connectivity matrices); parameter checkpoints
reuse the "NGTS" container since weights are plain matrices.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError

RAW_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path: str | Path, data: np.ndarray, magic: bytes = b"NGTS") -> None:
    data = np.ascontiguousarray(data, dtype="<f8")
    if data.ndim != 2:
        raise ParseError(f"raw container stores 2-D matrices, got ndim={data.ndim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, RAW_VERSION, data.shape[0], data.shape[1]))
        fh.write(data.tobytes())


def read_matrix(path: str | Path, magic: bytes = b"NGTS") -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ParseError(f"{path}: truncated header ({len(header)} bytes)")
        got_magic, version, rows, cols = _HEADER.unpack(header)
        if got_magic != magic:
            raise FormatError(f"{path}: expected magic {magic!r}, found {got_magic!r}")
        if version != RAW_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ParseError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected} "
            f"for {rows}x{cols} f64"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
