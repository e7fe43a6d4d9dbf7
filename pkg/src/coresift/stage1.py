"""Co-training of the toy target model and the scoring head.

Each step draws a minibatch from a seeded epoch shuffle, computes per-sample
losses under the current model, weights them through the scoring head, and
descends both: the model on the softmax-weighted gradient average, the
scoring head on the weighted-loss gradient.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bigram import (
    TokenSample,
    ToyBigramModel,
    batch_gradient,
    epoch_batches,
    model_step,
    sample_loss,
)
from .errors import NumericError, ValidationError
from .features import FeatureMatrix
from .scorenet import (
    ScoreNetParams,
    grad_wrt_params,
    model_batch_grad_weights,
    params_step,
    score_forward_all,
    weighted_loss,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 3
    lr_model: float = 0.5
    lr_scorenet: float = 2.0
    seed: int = 0
    l2_scorenet: float = 0.0
    grad_accum_steps: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_model <= 0:
            raise ValidationError(f"lr_model must be > 0, got {self.lr_model}")
        if self.lr_scorenet < 0:
            raise ValidationError(f"lr_scorenet must be >= 0, got {self.lr_scorenet}")
        if self.l2_scorenet < 0:
            raise ValidationError(f"l2_scorenet must be >= 0, got {self.l2_scorenet}")
        if self.grad_accum_steps < 1:
            raise ValidationError(f"grad_accum_steps must be >= 1, got {self.grad_accum_steps}")


def load_train_config(path: str | Path, **overrides) -> TrainConfig:
    """Read a TOML config file; keyword overrides win over file values."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    known = {f for f in TrainConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    data.update(overrides)
    return TrainConfig(**data)


@dataclass
class StepRecord:
    epoch: int
    step: int
    weighted_loss: float
    mean_loss: float
    min_w: float
    max_w: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    final_weights: np.ndarray | None = None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "weighted_loss", "mean_loss", "min_w", "max_w"])
            for rec in self.steps:
                writer.writerow(
                    [rec.epoch, rec.step, rec.weighted_loss, rec.mean_loss, rec.min_w, rec.max_w]
                )


def infer_vocab_size(samples: Sequence[TokenSample]) -> int:
    return max(max(s.tokens) for s in samples) + 1


def train_stage1(
    samples: Sequence[TokenSample],
    features: FeatureMatrix,
    config: TrainConfig,
    model: ToyBigramModel | None = None,
) -> tuple[ToyBigramModel, ScoreNetParams, TrainLog]:
    """Run the co-training loop; deterministic given config.seed.

    The final weights in the log are recomputed by a full forward pass of the
    trained scoring head over all features, not taken from stale in-training
    values.
    """
    if len(samples) != features.n:
        raise ValidationError(
            f"{len(samples)} samples but {features.n} feature rows; these must pair 1:1"
        )
    if model is None:
        model = ToyBigramModel.uniform(max(infer_vocab_size(samples), 2))
    params = ScoreNetParams.zeros(features.d)
    rng = np.random.default_rng(config.seed)
    log = TrainLog()

    n = features.n
    for epoch in range(config.epochs):
        acc_grad = np.zeros_like(model.logits)
        acc_batches = 0
        for step, idx in enumerate(epoch_batches(rng, n, config.batch_size)):
            batch = [samples[i] for i in idx]
            losses = np.empty(len(batch))
            for j, s in enumerate(batch):
                losses[j] = sample_loss(model, s)
                if not np.isfinite(losses[j]):
                    raise NumericError(f"non-finite loss for sample {s.id!r} (epoch {epoch})")
            feats = features.data[idx]
            raw = score_forward_all(params, feats)
            p = model_batch_grad_weights(raw)
            log.steps.append(
                StepRecord(
                    epoch=epoch,
                    step=step,
                    weighted_loss=weighted_loss(raw, losses),
                    mean_loss=float(np.mean(losses)),
                    min_w=float(np.min(raw)),
                    max_w=float(np.max(raw)),
                )
            )

            acc_grad += batch_gradient(model, batch, p)
            acc_batches += 1
            if acc_batches == config.grad_accum_steps:
                model = model_step(model, acc_grad / acc_batches, config.lr_model)
                acc_grad = np.zeros_like(model.logits)
                acc_batches = 0

            gw, gb = grad_wrt_params(params, feats, losses)
            if config.l2_scorenet:
                gw = gw + config.l2_scorenet * params.w_vec
                gb = gb + config.l2_scorenet * params.bias
            params = params_step(params, gw, gb, config.lr_scorenet)
        if acc_batches:
            # trailing accumulation group flushes at epoch end
            model = model_step(model, acc_grad / acc_batches, config.lr_model)

    log.final_weights = score_forward_all(params, features.data)
    return model, params, log
