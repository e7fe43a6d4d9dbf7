"""Linear scoring head: features -> raw sample weights -> softmax-weighted loss.

The mechanism that makes difficulty learnable: the weighted loss
L = sum_i softmax(w)_i * loss_i has dL/dw_i = p_i * (loss_i - L), so a
descent step pushes the raw weight of any above-average-loss sample down
and any below-average sample up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ScoreNetParams:
    """Affine map from a d-dimensional feature row to a raw scalar weight."""

    w_vec: np.ndarray
    bias: float

    def __post_init__(self):
        vec = np.asarray(self.w_vec, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError(f"w_vec must be 1-D, got shape {vec.shape}")
        if not (np.all(np.isfinite(vec)) and np.isfinite(self.bias)):
            raise ValidationError("score net parameters contain non-finite values")
        object.__setattr__(self, "w_vec", vec)
        object.__setattr__(self, "bias", float(self.bias))
        self.w_vec.setflags(write=False)

    @property
    def d(self) -> int:
        return self.w_vec.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "ScoreNetParams":
        """Zero init: every sample starts at weight 1 after normalization."""
        return cls(np.zeros(d), 0.0)


def score_forward(params: ScoreNetParams, features: np.ndarray) -> float:
    """Raw weight of one sample: w_vec . S + bias."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (params.d,):
        raise ValidationError(
            f"feature vector has shape {features.shape}, score net expects ({params.d},)"
        )
    return float(params.w_vec @ features + params.bias)


def score_forward_all(params: ScoreNetParams, features: np.ndarray) -> np.ndarray:
    """Raw weights for every row of an n-by-d feature block."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.d:
        raise ValidationError(
            f"feature block has shape {features.shape}, score net expects (*, {params.d})"
        )
    return features @ params.w_vec + params.bias


def _softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - np.max(raw)
    e = np.exp(shifted)
    return e / np.sum(e)


def _check_raw(raw_weights: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw_weights, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValidationError("raw weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(raw)):
        raise ValidationError("raw weights contain non-finite values")
    return raw


def normalize_batch(raw_weights: np.ndarray) -> np.ndarray:
    """Batch-relative weights: softmax over the batch scaled by batch size.

    Output sums to b and is invariant to adding a constant to every raw
    weight, so weights are comparable across batches.
    """
    raw = _check_raw(raw_weights)
    return _softmax(raw) * raw.size


def model_batch_grad_weights(raw_weights: np.ndarray) -> np.ndarray:
    """Coefficients with which per-sample gradients enter the model update.

    softmax(raw weights): the normalized weights divided by b, summing to 1.
    """
    return _softmax(_check_raw(raw_weights))


def weighted_loss(raw_weights: np.ndarray, losses: np.ndarray) -> float:
    """Softmax-weighted combination of per-sample losses (a convex combination)."""
    raw = _check_raw(raw_weights)
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != raw.shape:
        raise ValidationError(
            f"losses shape {losses.shape} does not match weights shape {raw.shape}"
        )
    if not np.all(np.isfinite(losses)):
        raise ValidationError("losses contain non-finite values")
    return float(_softmax(raw) @ losses)


def grad_wrt_raw_weights(raw_weights: np.ndarray, losses: np.ndarray) -> np.ndarray:
    """dL/dw_i = p_i * (loss_i - L), the per-sample raw-weight gradient."""
    raw = _check_raw(raw_weights)
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != raw.shape:
        raise ValidationError(
            f"losses shape {losses.shape} does not match weights shape {raw.shape}"
        )
    p = _softmax(raw)
    return p * (losses - p @ losses)


def grad_wrt_params(
    params: ScoreNetParams, features: np.ndarray, losses: np.ndarray
) -> tuple[np.ndarray, float]:
    """Chain rule through the softmax: gradients of the weighted loss w.r.t. phi."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.d:
        raise ValidationError(
            f"feature block has shape {features.shape}, score net expects (*, {params.d})"
        )
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != (features.shape[0],):
        raise ValidationError(
            f"losses shape {losses.shape} does not match batch size {features.shape[0]}"
        )
    raw = score_forward_all(params, features)
    dL_dw = grad_wrt_raw_weights(raw, losses)
    grad_w_vec = dL_dw @ features
    grad_bias = float(np.sum(dL_dw))
    return grad_w_vec, grad_bias


def params_step(
    params: ScoreNetParams, grad_w_vec: np.ndarray, grad_bias: float, lr: float
) -> ScoreNetParams:
    """One gradient-descent step on the score net parameters."""
    grad_w_vec = np.asarray(grad_w_vec, dtype=np.float64)
    if grad_w_vec.shape != params.w_vec.shape:
        raise ValidationError(
            f"gradient shape {grad_w_vec.shape} does not match params shape {params.w_vec.shape}"
        )
    if lr < 0:
        raise ValidationError(f"learning rate must be >= 0, got {lr}")
    return ScoreNetParams(params.w_vec - lr * grad_w_vec, params.bias - lr * grad_bias)


def save_params(params: ScoreNetParams, path: str | Path) -> None:
    obj = {"d": params.d, "w_vec": params.w_vec.tolist(), "bias": params.bias}
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> ScoreNetParams:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    params = ScoreNetParams(np.asarray(obj["w_vec"], dtype=np.float64), float(obj["bias"]))
    if params.d != obj["d"]:
        raise ValidationError(f"{path}: declared d={obj['d']} but w_vec has {params.d} entries")
    return params
