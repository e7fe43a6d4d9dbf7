"""Toy autoregressive bigram model with closed-form per-sample loss and gradient.

Stands in for the large target model: all the selection machinery needs from
the model is a per-sample loss and its gradient, and a bigram table makes
both exactly auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ParseError, ValidationError
from .features import FeatureMatrix, load_features, save_features


@dataclass(frozen=True)
class ToyBigramModel:
    """V-by-V table of unnormalized next-token log-probabilities."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logits, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"logits must be square, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValidationError(f"vocab size must be >= 2, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("logits contain non-finite values")
        object.__setattr__(self, "logits", arr)
        self.logits.setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[0]

    @classmethod
    def uniform(cls, vocab_size: int) -> "ToyBigramModel":
        return cls(np.zeros((vocab_size, vocab_size)))


@dataclass(frozen=True)
class TokenSample:
    """A token sequence; position j predicts position j+1."""

    id: str
    tokens: tuple[int, ...]

    def __post_init__(self):
        toks = tuple(int(t) for t in self.tokens)
        if len(toks) < 2:
            raise ValidationError(f"sample {self.id!r} needs at least 2 tokens, got {len(toks)}")
        if any(t < 0 for t in toks):
            raise ValidationError(f"sample {self.id!r} has a negative token")
        object.__setattr__(self, "tokens", toks)


def _check_tokens(model: ToyBigramModel, sample: TokenSample) -> None:
    if max(sample.tokens) >= model.vocab_size:
        raise ValidationError(
            f"sample {sample.id!r} has token {max(sample.tokens)} >= vocab size {model.vocab_size}"
        )


def sample_loss(model: ToyBigramModel, sample: TokenSample) -> float:
    """Mean next-token negative log-likelihood of *sample*, in nats per token."""
    _check_tokens(model, sample)
    toks = np.asarray(sample.tokens)
    contexts, targets = toks[:-1], toks[1:]
    # max-subtraction keeps the exp finite for extreme logits
    shifted = model.logits[contexts] - np.max(model.logits[contexts], axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    nll = log_z - shifted[np.arange(len(targets)), targets]
    return float(np.mean(nll))


def sample_grad(model: ToyBigramModel, sample: TokenSample) -> np.ndarray:
    """Gradient of sample_loss w.r.t. the logit table.

    Row u accumulates (softmax(logits[u]) - onehot(next)) over every position
    where u is the context token, divided by the number of transitions.
    """
    _check_tokens(model, sample)
    toks = np.asarray(sample.tokens)
    contexts, targets = toks[:-1], toks[1:]
    v = model.vocab_size
    grad = np.zeros((v, v))
    counts = np.zeros(v)
    np.add.at(counts, contexts, 1.0)
    np.add.at(grad, (contexts, targets), -1.0)
    used = np.nonzero(counts)[0]
    shifted = model.logits[used] - np.max(model.logits[used], axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= np.sum(probs, axis=1, keepdims=True)
    grad[used] += counts[used, None] * probs
    grad /= len(targets)
    return grad


def model_step(model: ToyBigramModel, gradient: np.ndarray, lr: float) -> ToyBigramModel:
    """One gradient-descent step on the logit table."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != model.logits.shape:
        raise ValidationError(
            f"gradient shape {gradient.shape} does not match logits {model.logits.shape}"
        )
    if lr <= 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    return ToyBigramModel(model.logits - lr * gradient)


def batch_gradient(
    model: ToyBigramModel, batch: Sequence[TokenSample], coeffs: np.ndarray
) -> np.ndarray:
    """Fixed-order weighted sum of per-sample gradients over *batch*."""
    total = np.zeros_like(model.logits)
    for c, sample in zip(coeffs, batch):
        total += c * sample_grad(model, sample)
    return total


def epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    """Seeded shuffle split into consecutive batches; the final partial batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def mean_loss(model: ToyBigramModel, samples: Sequence[TokenSample]) -> float:
    if not samples:
        raise ValidationError("cannot evaluate mean loss on an empty sample list")
    return float(np.mean([sample_loss(model, s) for s in samples]))


def train_plain(
    model: ToyBigramModel,
    samples: Sequence[TokenSample],
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> tuple[ToyBigramModel, Callable[[Sequence[TokenSample]], float]]:
    """Unweighted minibatch SGD over seeded epoch shuffles.

    Returns the trained model and an evaluator computing mean loss of that
    model on a held-out sample list.
    """
    if not samples:
        raise ValidationError("cannot train on an empty dataset")
    if batch_size < 1:
        raise ValidationError(f"batch size must be >= 1, got {batch_size}")
    if epochs < 0:
        raise ValidationError(f"epochs must be >= 0, got {epochs}")
    rng = np.random.default_rng(seed)
    n = len(samples)
    for _ in range(epochs):
        for idx in epoch_batches(rng, n, batch_size):
            batch = [samples[i] for i in idx]
            coeffs = np.ones(len(batch)) / len(batch)
            grad = batch_gradient(model, batch, coeffs)
            if not np.all(np.isfinite(grad)):
                raise NumericError("non-finite gradient during plain training")
            model = model_step(model, grad, lr)
    trained = model

    def evaluate(heldout: Sequence[TokenSample]) -> float:
        return mean_loss(trained, heldout)

    return trained, evaluate


def save_model(model: ToyBigramModel, path: str | Path) -> None:
    """Checkpoint as an SFFM matrix plus a JSON sidecar with the vocab size."""
    path = Path(path)
    save_features(FeatureMatrix(model.logits), path)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"vocab_size": model.vocab_size}) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ToyBigramModel:
    path = Path(path)
    matrix = load_features(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    v = meta["vocab_size"]
    if matrix.data.shape != (v, v):
        raise ValidationError(
            f"{path}: checkpoint shape {matrix.data.shape} does not match vocab_size {v}"
        )
    return ToyBigramModel(matrix.data)


def load_token_samples(path: str | Path) -> list[TokenSample]:
    """Read a JSON Lines token dataset: one {"id", "tokens"} object per line."""
    samples = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        samples.append(TokenSample(id=obj["id"], tokens=tuple(obj["tokens"])))
    return samples


def save_token_samples(samples: Sequence[TokenSample], path: str | Path) -> None:
    lines = [json.dumps({"id": s.id, "tokens": list(s.tokens)}) for s in samples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
