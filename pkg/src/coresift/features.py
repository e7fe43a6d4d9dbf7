"""Feature matrix and per-sample metadata storage.

The on-disk matrix format (SFFM) is a dumb, bit-exact binary contract so
that other tools can write it without linking against this package:

    bytes 0..3    magic, ASCII "SFFM"
    bytes 4..7    version, uint32 little-endian (currently 1)
    bytes 8..15   n (rows), uint64 little-endian
    bytes 16..23  d (columns), uint64 little-endian
    then          n*d IEEE-754 binary32 little-endian values, row-major

Metadata travels separately as JSON Lines, joined to the matrix by
position: record i describes feature row i.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ParseError, StorageError, ValidationError

MAGIC = b"SFFM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")  # magic, version, n, d


@dataclass(frozen=True)
class FeatureMatrix:
    """An n-by-d matrix of per-sample feature embeddings.

    Values are held as float64 for computation but are quantized through
    float32 on construction, matching the on-disk precision so that a
    save/load round trip is exact.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"feature matrix must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("feature matrix contains non-finite values")
        # float32 is the storage precision; quantize now so round trips are exact
        arr = arr.astype(np.float32).astype(np.float64)
        object.__setattr__(self, "data", arr)
        self.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class InstructionMeta:
    """Per-sample metadata record."""

    id: str
    text_len: int
    tags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.text_len < 0:
            raise ValidationError(f"text_len must be >= 0, got {self.text_len} for id {self.id!r}")


def save_features(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write *matrix* to *path* in the SFFM layout, byte-for-byte deterministic."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, matrix.n, matrix.d)
    payload = matrix.data.astype("<f4").tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise StorageError(f"cannot write features to {path}: {exc}") from exc


def load_features(path: str | Path) -> FeatureMatrix:
    """Read an SFFM file, re-validating all invariants."""
    path = Path(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read features from {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, n, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = n * d * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for {n}x{d}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n, d) if expected else np.empty((n, d))
    if n < 1 or d < 1:
        raise ValidationError(f"{path}: declared shape {n}x{d} violates n >= 1, d >= 1")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: payload contains non-finite values")
    return FeatureMatrix(values.astype(np.float64))


def load_metadata(path: str | Path) -> list[InstructionMeta]:
    """Read JSON Lines metadata in file order, enforcing id uniqueness."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read metadata from {path}: {exc}") from exc
    records: list[InstructionMeta] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "text_len" not in obj:
            raise ParseError(f"{path}:{lineno}: record must carry 'id' and 'text_len'")
        sid = obj["id"]
        if not isinstance(sid, str):
            raise ParseError(f"{path}:{lineno}: 'id' must be a string")
        if not isinstance(obj["text_len"], int) or isinstance(obj["text_len"], bool):
            raise ParseError(f"{path}:{lineno}: 'text_len' must be an integer")
        if sid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate id {sid!r}")
        seen.add(sid)
        tags = obj.get("tags", [])
        if not (isinstance(tags, list) and all(isinstance(t, str) for t in tags)):
            raise ParseError(f"{path}:{lineno}: 'tags' must be a list of strings")
        records.append(InstructionMeta(id=sid, text_len=obj["text_len"], tags=tuple(tags)))
    return records


def save_metadata(records: list[InstructionMeta], path: str | Path) -> None:
    """Write metadata records as JSON Lines, one object per sample."""
    path = Path(path)
    lines = []
    for rec in records:
        obj: dict = {"id": rec.id, "text_len": rec.text_len}
        if rec.tags:
            obj["tags"] = list(rec.tags)
        lines.append(json.dumps(obj, sort_keys=False))
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write metadata to {path}: {exc}") from exc
