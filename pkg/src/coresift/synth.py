"""Synthetic datasets with planted difficulty regimes and feature clusters.

Every regime shares one base transition table; the regime's temperature
divides the logits, so the hotter the regime, the closer its token chains sit
to uniform and the higher the per-token loss any model can hope for. Feature
rows are noisy copies of per-cluster unit centers, so regime identity (and
therefore difficulty) is linearly decodable from the features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bigram import TokenSample
from .errors import ValidationError
from .features import FeatureMatrix, InstructionMeta


@dataclass(frozen=True)
class RegimeSpec:
    """One difficulty regime: its share of samples and its chain temperature."""

    fraction: float
    temperature: float
    seq_len: tuple[int, int] | None = None  # overrides the dataset-wide range

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValidationError(f"regime fraction must be in (0, 1], got {self.fraction}")
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class SynthSpec:
    n: int
    vocab_size: int = 16
    seq_len: tuple[int, int] = (8, 16)
    regimes: tuple[RegimeSpec, ...] = (RegimeSpec(0.5, 0.1), RegimeSpec(0.5, 10.0))
    clusters_per_regime: int = 1
    feature_dim: int = 8
    feature_noise: float = 0.1
    seed: int = 0
    # sample draws come from a stream keyed by (seed, sample_stream); the
    # chains and cluster centers depend on seed alone, so stream 1 yields a
    # held-out set from exactly the same distribution
    sample_stream: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.vocab_size < 2:
            raise ValidationError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if not self.regimes:
            raise ValidationError("at least one regime is required")
        total = sum(r.fraction for r in self.regimes)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"regime fractions must sum to 1, got {total}")
        if self.clusters_per_regime < 1:
            raise ValidationError("clusters_per_regime must be >= 1")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.feature_noise < 0:
            raise ValidationError("feature_noise must be >= 0")
        lo, hi = self.seq_len
        if lo < 2 or hi < lo:
            raise ValidationError(f"seq_len range must satisfy 2 <= lo <= hi, got {self.seq_len}")


@dataclass(frozen=True)
class TruthRecord:
    id: str
    regime: int
    cluster: int
    difficulty_rank: int


@dataclass(frozen=True)
class SynthData:
    samples: list[TokenSample]
    features: FeatureMatrix
    meta: list[InstructionMeta]
    truth: list[TruthRecord]
    chain_logits: list[np.ndarray]  # per regime, the true transition logits


def regime_chain_logits(base: np.ndarray, temperature: float) -> np.ndarray:
    return base / temperature


def chain_entropy(logits: np.ndarray) -> float:
    """Mean per-row entropy: the expected per-token loss of the chain's own
    sampler under a uniform context distribution."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return float(np.mean(-plogp.sum(axis=1)))


def _regime_counts(n: int, fractions: list[float]) -> list[int]:
    counts = [int(np.floor(f * n)) for f in fractions]
    # distribute the rounding remainder by largest fractional part, low index first
    remainders = [(-(f * n - c), i) for i, (f, c) in enumerate(zip(fractions, counts))]
    for _, i in sorted(remainders)[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _cluster_centers(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Random unit vectors with pairwise cosine <= 0.5, by rejection."""
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < count:
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        if all(float(c @ v) <= 0.5 for c in centers):
            centers.append(v)
        attempts += 1
        if attempts > 10000 * count:
            raise ValidationError(
                f"cannot place {count} cluster centers with pairwise cosine <= 0.5 in dim {dim}"
            )
    return np.stack(centers)


def generate(spec: SynthSpec) -> SynthData:
    """Deterministically generate samples, features, metadata, and ground truth."""
    structure_rng = np.random.default_rng(spec.seed)
    rng = np.random.default_rng([spec.seed, 1000 + spec.sample_stream])
    v = spec.vocab_size
    base = structure_rng.normal(size=(v, v))
    regime_logits = [regime_chain_logits(base, r.temperature) for r in spec.regimes]
    regime_probs = []
    for logits in regime_logits:
        shifted = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        regime_probs.append(p / p.sum(axis=1, keepdims=True))

    # regimes ranked by expected per-token loss of their own chain
    entropies = [chain_entropy(lg) for lg in regime_logits]
    rank_of_regime = {int(r): k for k, r in enumerate(np.argsort(entropies, kind="stable"))}
    regime_cum = [np.cumsum(p, axis=1) for p in regime_probs]

    n_clusters = len(spec.regimes) * spec.clusters_per_regime
    centers = _cluster_centers(structure_rng, n_clusters, spec.feature_dim)

    counts = _regime_counts(spec.n, [r.fraction for r in spec.regimes])
    samples: list[TokenSample] = []
    rows = np.empty((spec.n, spec.feature_dim))
    meta: list[InstructionMeta] = []
    truth: list[TruthRecord] = []
    width = max(6, len(str(spec.n)))
    i = 0
    for regime_idx, (regime, count) in enumerate(zip(spec.regimes, counts)):
        lo, hi = regime.seq_len if regime.seq_len is not None else spec.seq_len
        cum = regime_cum[regime_idx]
        for _ in range(count):
            sid = f"s{i:0{width}d}"
            length = int(rng.integers(lo, hi + 1))
            tokens = [int(rng.integers(v))]
            for u in rng.random(length - 1):
                # inverse-CDF draw from the current context's transition row
                tokens.append(min(int(np.searchsorted(cum[tokens[-1]], u, side="right")), v - 1))
            cluster = regime_idx * spec.clusters_per_regime + int(
                rng.integers(spec.clusters_per_regime)
            )
            rows[i] = centers[cluster]
            if spec.feature_noise:
                rows[i] += rng.normal(0, spec.feature_noise, spec.feature_dim)
            samples.append(TokenSample(id=sid, tokens=tuple(tokens)))
            meta.append(
                InstructionMeta(
                    id=sid,
                    text_len=length,
                    tags=(f"regime:{regime_idx}", f"cluster:{cluster}"),
                )
            )
            truth.append(
                TruthRecord(
                    id=sid,
                    regime=regime_idx,
                    cluster=cluster,
                    difficulty_rank=rank_of_regime[regime_idx],
                )
            )
            i += 1
    return SynthData(
        samples=samples,
        features=FeatureMatrix(rows),
        meta=meta,
        truth=truth,
        chain_logits=regime_logits,
    )


def save_truth(truth: list[TruthRecord], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"id": t.id, "regime": t.regime, "cluster": t.cluster, "difficulty_rank": t.difficulty_rank}
        )
        for t in truth
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path: str | Path) -> list[TruthRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append(
            TruthRecord(
                id=obj["id"],
                regime=obj["regime"],
                cluster=obj["cluster"],
                difficulty_rank=obj["difficulty_rank"],
            )
        )
    return out
