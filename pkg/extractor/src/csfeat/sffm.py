"""Writer (and self-check reader) for the SFFM binary feature format.

Implemented here from the format contract alone, independently of the
consuming engine: magic "SFFM", u32 LE version 1, u64 LE n, u64 LE d, then
n*d float32 LE values row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFFM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class SffmError(Exception):
    pass


def write_sffm(matrix: np.ndarray, path: str | Path) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise SffmError(f"matrix must be 2-D and non-empty, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise SffmError("matrix contains non-finite values")
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def read_sffm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SffmError(f"{path}: shorter than the header")
    magic, version, n, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION:
        raise SffmError(f"{path}: bad magic/version ({magic!r}, {version})")
    payload = raw[_HEADER.size:]
    if len(payload) != n * d * 4:
        raise SffmError(f"{path}: payload length {len(payload)} != {n}x{d}x4")
    return np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
