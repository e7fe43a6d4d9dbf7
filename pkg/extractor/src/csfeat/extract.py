"""Record reading, feature assembly, and output writing."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .encoders import EncoderBackend, load_image_bytes, make_backend
from .sffm import write_sffm

logger = logging.getLogger("csfeat")

EXTRACTORS = ("clip-features", "clip-score", "reward-score", "external-score")

# toy byte-level tokenization: BOS + utf-8 bytes + EOS, so every record has
# at least two tokens and the engine's vocab is fixed at 258
TOKEN_BOS = 256
TOKEN_EOS = 257
TOKEN_VOCAB = 258
TOKEN_CAP = 512

TEXT_POLICY = (
    "multi-turn conversations must be pre-flattened into the record's single "
    "text field; text encoders truncate at their own token limit"
)


class ExtractError(Exception):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    dataset: Path
    out_dir: Path
    extractors: tuple[str, ...] = ("clip-features",)
    backend: str = "hashed"
    device: str = "cpu"
    scores_file: Path | None = None
    emit_tokens: bool = False

    def __post_init__(self):
        if not self.extractors:
            raise ExtractError("at least one extractor must be enabled")
        unknown = set(self.extractors) - set(EXTRACTORS)
        if unknown:
            raise ExtractError(f"unknown extractors {sorted(unknown)}, expected {EXTRACTORS}")
        if "external-score" in self.extractors and self.scores_file is None:
            raise ExtractError("external-score needs a scores file")


@dataclass
class Record:
    id: str
    image_path: str
    text: str
    image_bytes: bytes = b""


@dataclass
class ExtractResult:
    n: int
    d: int
    skipped: list[str] = field(default_factory=list)


def read_dataset(path: str | Path) -> list[Record]:
    records = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExtractError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        for key in ("id", "image_path", "text"):
            if key not in obj:
                raise ExtractError(f"{path}:{lineno}: record is missing {key!r}")
        if obj["id"] in seen:
            raise ExtractError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
        seen.add(obj["id"])
        records.append(Record(id=obj["id"], image_path=obj["image_path"], text=obj["text"]))
    return records


def read_scores(path: str | Path) -> dict[str, float]:
    scores: dict[str, float] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["id"] in scores:
            raise ExtractError(f"{path}:{lineno}: duplicate score for id {obj['id']!r}")
        scores[obj["id"]] = float(obj["score"])
    return scores


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def _record_columns(
    record: Record,
    extractors: tuple[str, ...],
    backend: EncoderBackend,
    external: dict[str, float] | None,
) -> np.ndarray:
    img = txt = None
    if "clip-features" in extractors or "clip-score" in extractors:
        img = backend.encode_image(record.image_bytes)
        txt = backend.encode_text(record.text)
    parts = []
    for name in extractors:
        if name == "clip-features":
            parts.append(np.concatenate([img, txt]))
        elif name == "clip-score":
            parts.append(np.array([_cosine(img, txt)]))
        elif name == "reward-score":
            parts.append(np.array([backend.reward_score(record.image_bytes, record.text)]))
        else:  # external-score
            if record.id not in external:
                raise ExtractError(f"external scores are missing id {record.id!r}")
            parts.append(np.array([external[record.id]]))
    return np.concatenate(parts)


def tokenize_bytes(text: str) -> list[int]:
    return [TOKEN_BOS] + list(text.encode("utf-8"))[:TOKEN_CAP] + [TOKEN_EOS]


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def extract(config: ExtractorConfig) -> ExtractResult:
    """Encode every readable record and write features + metadata (+ tokens)."""
    backend = make_backend(config.backend, config.device)
    records = read_dataset(config.dataset)
    external = read_scores(config.scores_file) if config.scores_file else None
    if external is not None:
        known = {r.id for r in records}
        unknown = set(external) - known
        if unknown:
            raise ExtractError(f"external score for unknown id {sorted(unknown)[0]!r}")

    kept: list[Record] = []
    skipped: list[str] = []
    for record in records:
        try:
            record.image_bytes = load_image_bytes(record.image_path)
        except Exception as exc:
            logger.warning("skipping %s: unreadable image %s (%s)", record.id,
                           record.image_path, exc)
            skipped.append(record.id)
            continue
        kept.append(record)
    if not kept:
        raise ExtractError("no readable records; nothing to extract")

    rows = [
        _record_columns(record, config.extractors, backend, external) for record in kept
    ]
    matrix = np.stack(rows)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sffm(matrix, out / "features.sffm")
    with open(out / "meta.jsonl", "w", encoding="utf-8") as fh:
        for record in kept:
            fh.write(json.dumps(
                {"id": record.id, "text_len": backend.token_count(record.text)}
            ) + "\n")
    if config.emit_tokens:
        with open(out / "tokens.jsonl", "w", encoding="utf-8") as fh:
            for record in kept:
                fh.write(json.dumps({"id": record.id, "tokens": tokenize_bytes(record.text)}) + "\n")

    manifest = {
        "tool": "csfeat",
        "version": __version__,
        "command": "extract",
        "params": {
            "extractors": list(config.extractors),
            "backend": backend.name,
            "emit_tokens": config.emit_tokens,
            "token_vocab": TOKEN_VOCAB if config.emit_tokens else None,
            "text_policy": TEXT_POLICY,
        },
        "inputs": {"dataset": {"path": str(config.dataset),
                               "sha256": _file_digest(config.dataset)}},
        "skipped": skipped,
    }
    if config.scores_file:
        manifest["inputs"]["scores_file"] = {
            "path": str(config.scores_file),
            "sha256": _file_digest(config.scores_file),
        }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return ExtractResult(n=matrix.shape[0], d=matrix.shape[1], skipped=skipped)


def merge_external(
    features_path: str | Path,
    meta_path: str | Path,
    scores_file: str | Path,
    out_features: str | Path,
) -> tuple[int, int]:
    """Append one id-aligned score column to an existing feature matrix."""
    from .sffm import read_sffm

    matrix = read_sffm(features_path)
    ids = []
    for line in Path(meta_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            ids.append(json.loads(line)["id"])
    if len(ids) != matrix.shape[0]:
        raise ExtractError(
            f"{meta_path} has {len(ids)} records but the matrix has {matrix.shape[0]} rows"
        )
    scores = read_scores(scores_file)
    missing = [sid for sid in ids if sid not in scores]
    if missing:
        raise ExtractError(f"external scores are missing id {missing[0]!r}")
    unknown = set(scores) - set(ids)
    if unknown:
        raise ExtractError(f"external score for unknown id {sorted(unknown)[0]!r}")
    column = np.array([[scores[sid]] for sid in ids])
    merged = np.hstack([matrix, column])
    write_sffm(merged, out_features)
    return merged.shape
