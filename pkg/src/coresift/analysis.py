"""Statistical analyses over difficulty scores and selections: correlation
with text length, rank agreement with planted truth, cluster coverage, and
sweeps of the end-to-end pipeline over pruning size or batch size.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import ScoreVector
from .bigram import ToyBigramModel, train_plain
from .errors import CoresiftError, UndefinedMetricError, ValidationError
from .features import InstructionMeta
from .selection import SelectionResult, build_knn, compute_difficulty, select
from .stage1 import TrainConfig, train_stage1
from .synth import SynthSpec, generate


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson product-moment correlation; constant input is an error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"need equal-length 1-D vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValidationError(f"need at least 2 points, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetricError("correlation is undefined for a constant vector")
    return float(np.clip(xc @ yc / (sx * sy), -1.0, 1.0))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of the average-rank vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"need equal-length 1-D vectors, got {x.shape} and {y.shape}")
    return pearson(average_ranks(x), average_ranks(y))


def cluster_tag(meta: InstructionMeta) -> str:
    for tag in meta.tags:
        if tag.startswith("cluster:"):
            return tag
    raise ValidationError(f"sample {meta.id!r} carries no cluster tag")


def cluster_coverage(
    selection: SelectionResult, meta: Sequence[InstructionMeta]
) -> tuple[int, float]:
    """(distinct clusters among selected, largest per-cluster share)."""
    by_id = {rec.id: rec for rec in meta}
    counts: dict[str, int] = {}
    for entry in selection.entries:
        if entry.id not in by_id:
            raise ValidationError(f"selected id {entry.id!r} has no metadata record")
        tag = cluster_tag(by_id[entry.id])
        counts[tag] = counts.get(tag, 0) + 1
    total = len(selection.entries)
    return len(counts), max(counts.values()) / total


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one end-to-end run needs: data, training, selection, retrain."""

    synth: SynthSpec
    train: TrainConfig
    m: int
    k: int = 10
    gamma: float = 1.0
    diversity: bool = True
    easiest: bool = False
    heldout_n: int = 200
    retrain_epochs: int = 3
    retrain_lr: float = 0.5
    retrain_batch_size: int = 16


@dataclass
class PipelineOutcome:
    heldout_loss: float
    clusters_covered: int
    max_concentration: float
    selection: SelectionResult
    difficulties: np.ndarray


def run_pipeline(config: PipelineConfig) -> PipelineOutcome:
    """generate -> co-train -> score -> select -> retrain -> held-out loss."""
    data = generate(config.synth)
    # held-out pool: same chains and centers, fresh sample stream
    heldout_spec = replace(config.synth, n=config.heldout_n, sample_stream=1)
    heldout = generate(heldout_spec)

    _, params, _ = train_stage1(data.samples, data.features, config.train)
    table = compute_difficulty(params, data.features)
    if config.easiest:
        table.d = -table.d
    difficulties = table.d.copy()
    index = build_knn(data.features, config.k)
    result = select(
        table,
        index,
        m=config.m,
        gamma=config.gamma,
        diversity=config.diversity,
        ids=[s.id for s in data.samples],
    )
    covered, concentration = cluster_coverage(result, data.meta)

    subset = [data.samples[i] for i in result.indices]
    model = ToyBigramModel.uniform(config.synth.vocab_size)
    _, evaluate = train_plain(
        model,
        subset,
        epochs=config.retrain_epochs,
        batch_size=config.retrain_batch_size,
        lr=config.retrain_lr,
        seed=config.train.seed,
    )
    return PipelineOutcome(
        heldout_loss=evaluate(heldout.samples),
        clusters_covered=covered,
        max_concentration=concentration,
        selection=result,
        difficulties=difficulties,
    )


SWEEP_VARIABLES = ("pruning-size", "batch-size")


@dataclass
class Report:
    """Named metrics plus one table of (variable value -> outcomes)."""

    variable: str
    rows: list[dict] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> None:
        columns = [self.variable, "heldout_loss", "clusters_covered", "max_concentration", "seed"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in self.rows:
                writer.writerow([row[c] for c in columns])

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"variable": self.variable, "metrics": self.metrics, "rows": self.rows},
                       sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )


class SweepError(CoresiftError):
    """A pipeline run inside a sweep failed; .report holds the completed rows."""

    def __init__(self, message: str, report: Report):
        super().__init__(message)
        self.report = report


def sweep(config: PipelineConfig, variable: str, values: Sequence) -> Report:
    """Run the full pipeline once per value.

    Seed policy: base seed + index of the value's first occurrence, so
    repeated values produce identical rows.
    """
    if variable not in SWEEP_VARIABLES:
        raise ValidationError(f"unknown sweep variable {variable!r}, expected {SWEEP_VARIABLES}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    report = Report(variable=variable)
    base_overall = config.train.batch_size * config.train.grad_accum_steps
    values = list(values)
    for i, value in enumerate(values):
        seed = config.train.seed + values.index(value)
        run = replace(
            config,
            synth=replace(config.synth, seed=seed),
            train=replace(config.train, seed=seed),
        )
        if variable == "pruning-size":
            run = replace(run, m=int(value))
        else:
            local = int(value)
            accum = max(1, round(base_overall / local))
            run = replace(run, train=replace(run.train, batch_size=local, seed=seed,
                                             grad_accum_steps=accum))
        try:
            outcome = run_pipeline(run)
        except CoresiftError as exc:
            raise SweepError(f"sweep aborted at {variable}={value}: {exc}", report) from exc
        report.rows.append(
            {
                variable: value,
                "heldout_loss": outcome.heldout_loss,
                "clusters_covered": outcome.clusters_covered,
                "max_concentration": outcome.max_concentration,
                "seed": seed,
            }
        )
    losses = [row["heldout_loss"] for row in report.rows]
    report.metrics["best_value"] = float(report.rows[int(np.argmin(losses))][variable])
    report.metrics["best_heldout_loss"] = float(np.min(losses))
    return report


def score_vector_difficulty(vec: ScoreVector) -> np.ndarray:
    """Baselines rank through the selector: score doubles as difficulty."""
    return vec.scores.copy()
