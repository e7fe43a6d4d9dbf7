"""Reference pruning metrics: loss, gradient norm, prototypicality, random,
and ingestion of externally computed quality scores.

All scores follow the higher-is-kept-first convention, so any ScoreVector can
be ranked through the selector with diversity disabled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bigram import TokenSample, ToyBigramModel, sample_grad, sample_loss
from .errors import ValidationError
from .features import FeatureMatrix


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    name: str

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("scores must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{self.name}: scores contain non-finite values")
        object.__setattr__(self, "scores", arr)
        self.scores.setflags(write=False)


def el2n_scores(model: ToyBigramModel, samples: Sequence[TokenSample]) -> ScoreVector:
    """Per-sample mean cross-entropy under the current model."""
    return ScoreVector(np.array([sample_loss(model, s) for s in samples]), "el2n")


def grand_scores(
    model: ToyBigramModel | Sequence[ToyBigramModel], samples: Sequence[TokenSample]
) -> ScoreVector:
    """Per-sample gradient norm at the current parameters.

    Passing several model snapshots averages the norm over them, recovering
    the expectation-over-draws reading of the metric.
    """
    models = [model] if isinstance(model, ToyBigramModel) else list(model)
    if not models:
        raise ValidationError("grand_scores needs at least one model snapshot")
    out = np.zeros(len(samples))
    for m in models:
        out += np.array([np.linalg.norm(sample_grad(m, s)) for s in samples])
    return ScoreVector(out / len(models), "grand")


def kmeans(
    features: FeatureMatrix,
    n_clusters: int,
    seed: int,
    max_iters: int = 100,
    return_history: bool = False,
):
    """Lloyd's algorithm with seeded initialization from K distinct rows.

    Runs until assignments stabilize or max_iters. An empty cluster is
    re-seeded to the point farthest from its assigned centroid (lowest index
    on ties), which keeps the objective non-increasing.

    Returns (centroids, assignments), plus the per-iteration objective values
    when return_history is set.
    """
    x = features.data
    n = features.n
    if n_clusters < 1 or n_clusters > n:
        raise ValidationError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=n_clusters, replace=False)].copy()
    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        dists = np.linalg.norm(x[:, None, :] - centroids[None, :, :], axis=2)
        new_assignments = np.argmin(dists, axis=1)
        point_dist = dists[np.arange(n), new_assignments]
        # re-seed empty clusters before taking means so every mean is computed
        # over its final membership (keeps the objective non-increasing)
        occupied = np.bincount(new_assignments, minlength=n_clusters) > 0
        for c in np.nonzero(~occupied)[0]:
            far = int(np.argmax(point_dist))
            centroids[c] = x[far]
            new_assignments[far] = c
            point_dist[far] = 0.0
        for c in range(n_clusters):
            members = new_assignments == c
            if np.any(members):
                centroids[c] = x[members].mean(axis=0)
        history.append(float(np.sum(point_dist**2)))
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    if return_history:
        return centroids, assignments, history
    return centroids, assignments


def prototypicality_scores(features: FeatureMatrix, n_clusters: int, seed: int) -> ScoreVector:
    """Distance of each sample to its cluster centroid; far points rank as hard."""
    centroids, assignments = kmeans(features, n_clusters, seed)
    dists = np.linalg.norm(features.data - centroids[assignments], axis=1)
    return ScoreVector(dists, "prototypicality")


def default_n_clusters(n: int) -> int:
    return max(1, round(np.sqrt(n)))


def random_select(n: int, m: int, seed: int) -> list[int]:
    """m distinct indices drawn uniformly without replacement."""
    if m < 0 or m > n:
        raise ValidationError(f"m must be in [0, {n}], got {m}")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.choice(n, size=m, replace=False)]


def ingest_external_scores(path: str | Path, ids: Sequence[str]) -> ScoreVector:
    """Read {"id", "score"} JSON Lines and align scores to the dataset order."""
    by_id: dict[str, float] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        sid = obj["id"]
        if sid in by_id:
            raise ValidationError(f"{path}:{lineno}: duplicate score for id {sid!r}")
        by_id[sid] = float(obj["score"])
    missing = [sid for sid in ids if sid not in by_id]
    if missing:
        raise ValidationError(f"{path}: no score for id {missing[0]!r}")
    extra = set(by_id) - set(ids)
    if extra:
        raise ValidationError(f"{path}: score for unknown id {sorted(extra)[0]!r}")
    return ScoreVector(np.array([by_id[sid] for sid in ids]), "external")


def save_scores(vec: ScoreVector, ids: Sequence[str], path: str | Path) -> None:
    """Write scores as {"id", "score"} JSON Lines in dataset order."""
    if len(ids) != vec.scores.size:
        raise ValidationError(f"{len(ids)} ids for {vec.scores.size} scores")
    lines = [json.dumps({"id": sid, "score": float(s)}) for sid, s in zip(ids, vec.scores)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
