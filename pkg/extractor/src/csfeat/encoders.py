"""Encoder backends.

The `clip` backend wraps the pretrained CLIP image/text encoders (768-d
each); loading it requires the model weights to be available locally or
downloadable. The `hashed` backend derives deterministic pseudo-embeddings
of the same dimensionality from the content bytes, so pipelines and tests
run without any model weights: identical content always maps to identical
vectors, distinct content to (almost surely) distinct ones.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Protocol

import numpy as np

EMBED_DIM = 768
CLIP_MODEL = "openai/clip-vit-large-patch14"
CLIP_MAX_TOKENS = 77


class EncoderError(Exception):
    pass


class EncoderBackend(Protocol):
    name: str

    def encode_image(self, image_bytes: bytes) -> np.ndarray: ...

    def encode_text(self, text: str) -> np.ndarray: ...

    def token_count(self, text: str) -> int: ...

    def reward_score(self, image_bytes: bytes, text: str) -> float: ...


def _hash_vector(payload: bytes, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
    vec = np.random.default_rng(seed).standard_normal(dim)
    return (vec / np.linalg.norm(vec)).astype(np.float32).astype(np.float64)


class HashedBackend:
    """Deterministic content-keyed stand-in with CLIP's dimensionality."""

    name = "hashed"

    def encode_image(self, image_bytes: bytes) -> np.ndarray:
        return _hash_vector(b"img\x00" + image_bytes, EMBED_DIM)

    def encode_text(self, text: str) -> np.ndarray:
        return _hash_vector(b"txt\x00" + text.encode("utf-8"), EMBED_DIM)

    def token_count(self, text: str) -> int:
        return len(text.split())

    def reward_score(self, image_bytes: bytes, text: str) -> float:
        vec = _hash_vector(b"rwd\x00" + image_bytes + b"\x00" + text.encode("utf-8"), 1)
        return float(vec[0])


class ClipBackend:
    """Pretrained CLIP encoders; construction fails hard if weights are missing."""

    name = "clip"

    def __init__(self, model_name: str = CLIP_MODEL, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(f"clip backend needs torch and transformers: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_name).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(model_name)
        except Exception as exc:
            raise EncoderError(f"cannot load {model_name}: {exc}") from exc
        self._torch = torch
        self._device = device

    def encode_image(self, image_bytes: bytes) -> np.ndarray:
        import io

        from PIL import Image

        image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
        inputs = self._processor(images=image, return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            emb = self._model.get_image_features(**inputs)
        return emb[0].cpu().numpy().astype(np.float32).astype(np.float64)

    def encode_text(self, text: str) -> np.ndarray:
        inputs = self._processor(
            text=[text], return_tensors="pt", truncation=True, max_length=CLIP_MAX_TOKENS
        ).to(self._device)
        with self._torch.no_grad():
            emb = self._model.get_text_features(**inputs)
        return emb[0].cpu().numpy().astype(np.float32).astype(np.float64)

    def token_count(self, text: str) -> int:
        ids = self._processor.tokenizer(text, truncation=True, max_length=CLIP_MAX_TOKENS)
        return len(ids["input_ids"])

    def reward_score(self, image_bytes: bytes, text: str) -> float:
        raise EncoderError(
            "no reward model is bundled; supply reward values through an external "
            "score file or use the hashed backend"
        )


def make_backend(name: str, device: str = "cpu") -> EncoderBackend:
    if name == "hashed":
        return HashedBackend()
    if name == "clip":
        return ClipBackend(device=device)
    raise EncoderError(f"unknown backend {name!r}, expected 'hashed' or 'clip'")


def load_image_bytes(path: str | Path) -> bytes:
    """Read and validate an image file; raises on anything unreadable."""
    from PIL import Image

    data = Path(path).read_bytes()
    import io

    with Image.open(io.BytesIO(data)) as img:
        img.verify()
    return data
