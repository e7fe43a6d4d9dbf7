"""Greedy hardest-first selection with a k-nearest-neighbor diversity penalty.

Difficulty is the negated scoring-head weight. Selection repeatedly takes the
highest-difficulty sample still available and discounts the difficulty of its
k nearest neighbors by gamma * similarity^2 * (selected difficulty), pushing
later picks away from already-covered regions of feature space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .features import FeatureMatrix
from .scorenet import ScoreNetParams, score_forward_all


class DifficultyTable:
    """Per-sample difficulty plus an alive flag cleared on selection.

    Single-owner mutable: select() updates d in place and clears alive flags.
    """

    def __init__(self, d: np.ndarray):
        d = np.asarray(d, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise ValidationError("difficulty vector must be non-empty and 1-D")
        if not np.all(np.isfinite(d)):
            raise ValidationError("difficulty vector contains non-finite values")
        self.d = d.copy()
        self.alive = np.ones(d.size, dtype=bool)

    @property
    def n(self) -> int:
        return self.d.size


@dataclass(frozen=True)
class NeighborIndex:
    """For each sample, its k most cosine-similar other samples, best first."""

    neighbors: np.ndarray  # (n, k) int indices
    similarities: np.ndarray  # (n, k) float64 in [-1, 1]
    k: int

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]


@dataclass(frozen=True)
class SelectionEntry:
    id: str
    rank: int
    d_at_selection: float
    index: int


@dataclass(frozen=True)
class SelectionResult:
    entries: tuple[SelectionEntry, ...]
    gamma: float
    diversity_enabled: bool

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.entries]


def compute_difficulty(params: ScoreNetParams, features: FeatureMatrix) -> DifficultyTable:
    """Difficulty d_i = -(scoring-head weight of sample i); all samples alive."""
    return DifficultyTable(-score_forward_all(params, features.data))


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def build_knn(features: FeatureMatrix, k: int, block: int = 1024) -> NeighborIndex:
    """Exact k nearest neighbors by cosine similarity, self excluded.

    Brute force over all pairs, blocked over query rows to bound memory.
    Ties are broken toward the lower index.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    n = features.n
    if n < 2:
        raise ValidationError(f"need at least 2 samples to build neighbors, got {n}")
    norms = np.linalg.norm(features.data, axis=1)
    zero_rows = np.nonzero(norms == 0.0)[0]
    if zero_rows.size:
        raise ValidationError(f"feature row {zero_rows[0]} is a zero vector")
    unit = features.data / norms[:, None]
    kk = min(k, n - 1)
    neighbors = np.empty((n, kk), dtype=np.int64)
    sims = np.empty((n, kk))
    for start in range(0, n, block):
        stop = min(start + block, n)
        gram = np.clip(unit[start:stop] @ unit.T, -1.0, 1.0)
        gram[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on descending similarity keeps lower indices first on ties
        order = np.argsort(-gram, axis=1, kind="stable")[:, :kk]
        neighbors[start:stop] = order
        sims[start:stop] = np.take_along_axis(gram, order, axis=1)
    return NeighborIndex(neighbors=neighbors, similarities=sims, k=k)


def select(
    table: DifficultyTable,
    index: NeighborIndex,
    m: int,
    gamma: float = 1.0,
    diversity: bool = True,
    ids: Sequence[str] | None = None,
) -> SelectionResult:
    """Greedy selection of m samples, hardest first, with the diversity penalty.

    Each pick takes the alive sample with maximal current difficulty (ties to
    the lower index), then subtracts gamma * sim^2 * d_pick from every still-
    alive stored neighbor of the pick. With diversity off (or gamma 0) this
    reduces to a stable top-m sort.
    """
    n = table.n
    if index.n != n:
        raise ValidationError(f"neighbor index covers {index.n} samples, table has {n}")
    if m < 1 or m > n:
        raise ValidationError(f"m must be in [1, {n}], got {m}")
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    if ids is None:
        ids = [str(i) for i in range(n)]
    elif len(ids) != n:
        raise ValidationError(f"{len(ids)} ids for {n} samples")

    entries = []
    for rank in range(m):
        masked = np.where(table.alive, table.d, -np.inf)
        pick = int(np.argmax(masked))  # argmax returns the lowest index on ties
        d_pick = float(table.d[pick])
        entries.append(SelectionEntry(id=ids[pick], rank=rank, d_at_selection=d_pick, index=pick))
        table.alive[pick] = False
        if diversity and gamma != 0.0:
            for j, sim in zip(index.neighbors[pick], index.similarities[pick]):
                if table.alive[j]:
                    table.d[j] -= gamma * sim * sim * d_pick
    return SelectionResult(entries=tuple(entries), gamma=gamma, diversity_enabled=diversity)


def save_difficulty(table: DifficultyTable, ids: Sequence[str], path: str | Path) -> None:
    """Write the difficulty file: one {"id", "d"} object per line."""
    if len(ids) != table.n:
        raise ValidationError(f"{len(ids)} ids for {table.n} difficulties")
    lines = [json.dumps({"id": sid, "d": float(v)}) for sid, v in zip(ids, table.d)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_difficulty(path: str | Path) -> tuple[list[str], DifficultyTable]:
    ids, values = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        ids.append(obj["id"])
        values.append(float(obj["d"]))
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate ids in difficulty file")
    return ids, DifficultyTable(np.asarray(values))


def save_selection(result: SelectionResult, path: str | Path) -> None:
    """Write the selection file: one {"id", "rank", "d_at_selection"} per line."""
    lines = [
        json.dumps({"id": e.id, "rank": e.rank, "d_at_selection": e.d_at_selection})
        for e in result.entries
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_selection_ids(path: str | Path) -> list[str]:
    ids = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            ids.append(json.loads(line)["id"])
    return ids
