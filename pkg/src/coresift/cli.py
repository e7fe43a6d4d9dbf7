"""Command-line pipelines: synth data generation, co-training, difficulty
scoring, diversity-aware selection, baseline metrics, subset retraining, and
analysis reports. Every command is a pure function of (inputs, flags, seed)
and writes a manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    PipelineConfig,
    SweepError,
    cluster_coverage,
    pearson,
    sweep,
)
from .baselines import (
    default_n_clusters,
    el2n_scores,
    grand_scores,
    ingest_external_scores,
    prototypicality_scores,
    random_select,
    save_scores,
)
from .bigram import (
    ToyBigramModel,
    load_model,
    load_token_samples,
    mean_loss,
    save_model,
    save_token_samples,
    train_plain,
)
from .errors import CoresiftError, ValidationError
from .features import load_features, load_metadata, save_features, save_metadata
from .manifest import write_manifest
from .scorenet import load_params, save_params
from .selection import (
    DifficultyTable,
    SelectionEntry,
    SelectionResult,
    build_knn,
    compute_difficulty,
    load_difficulty,
    load_selection_ids,
    save_difficulty,
    save_selection,
    select,
)
from .stage1 import TrainConfig, infer_vocab_size, load_train_config, train_stage1
from .synth import RegimeSpec, SynthSpec, generate, save_truth


def _parse_regimes(text: str) -> tuple[RegimeSpec, ...]:
    """Parse 'frac:temp[:lo:hi]' clauses separated by commas."""
    regimes = []
    for clause in text.split(","):
        parts = clause.strip().split(":")
        if len(parts) not in (2, 4):
            raise ValidationError(
                f"bad regime clause {clause!r}, expected frac:temp or frac:temp:lo:hi"
            )
        frac, temp = float(parts[0]), float(parts[1])
        seq_len = (int(parts[2]), int(parts[3])) if len(parts) == 4 else None
        regimes.append(RegimeSpec(fraction=frac, temperature=temp, seq_len=seq_len))
    return tuple(regimes)


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def _synth_spec_from_args(args) -> SynthSpec:
    return SynthSpec(
        n=args.n,
        vocab_size=args.vocab_size,
        seq_len=_parse_range(args.seq_len),
        regimes=_parse_regimes(args.regimes),
        clusters_per_regime=args.clusters_per_regime,
        feature_dim=args.feature_dim,
        feature_noise=args.noise,
        seed=args.seed,
    )


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=1000, help="number of samples")
    p.add_argument("--vocab-size", type=int, default=16)
    p.add_argument("--seq-len", default="8:16", help="token length range lo:hi")
    p.add_argument(
        "--regimes",
        default="0.5:0.1,0.5:10",
        help="comma-separated frac:temp[:lo:hi] difficulty regimes",
    )
    p.add_argument("--clusters-per-regime", type=int, default=1)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1, help="feature noise sigma")


def _train_config_from_args(args) -> TrainConfig:
    overrides = {}
    for key in (
        "batch_size",
        "epochs",
        "lr_model",
        "lr_scorenet",
        "seed",
        "l2_scorenet",
        "grad_accum_steps",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "config", None):
        return load_train_config(args.config, **overrides)
    return TrainConfig(**overrides)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with training keys")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr-model", dest="lr_model", type=float, default=None)
    p.add_argument("--lr-scorenet", dest="lr_scorenet", type=float, default=None)
    p.add_argument("--l2-scorenet", dest="l2_scorenet", type=float, default=None)
    p.add_argument("--grad-accum-steps", dest="grad_accum_steps", type=int, default=None)


def cmd_gen_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = _synth_spec_from_args(args)
    data = generate(spec)
    save_features(data.features, out / "features.sffm")
    save_metadata(data.meta, out / "meta.jsonl")
    save_token_samples(data.samples, out / "tokens.jsonl")
    save_truth(data.truth, out / "truth.jsonl")
    if args.heldout:
        heldout = generate(replace(spec, n=args.heldout, sample_stream=1))
        save_token_samples(heldout.samples, out / "heldout_tokens.jsonl")
    write_manifest(
        out,
        "gen-synth",
        params={
            "n": spec.n,
            "vocab_size": spec.vocab_size,
            "seq_len": list(spec.seq_len),
            "regimes": [
                {"fraction": r.fraction, "temperature": r.temperature,
                 "seq_len": list(r.seq_len) if r.seq_len else None}
                for r in spec.regimes
            ],
            "clusters_per_regime": spec.clusters_per_regime,
            "feature_dim": spec.feature_dim,
            "feature_noise": spec.feature_noise,
            "seed": spec.seed,
            "heldout": args.heldout,
        },
        inputs={},
    )
    print(f"wrote {spec.n} samples to {out}")
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _train_config_from_args(args)
    samples = load_token_samples(args.tokens)
    features = load_features(args.features)
    model = None
    if args.vocab_size is not None:
        model = ToyBigramModel.uniform(args.vocab_size)
    model, params, log = train_stage1(samples, features, config, model=model)
    save_model(model, out / "model.sffm")
    save_params(params, out / "scorenet.json")
    log.to_csv(out / "trainlog.csv")
    write_manifest(
        out,
        "train",
        params={
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "lr_model": config.lr_model,
            "lr_scorenet": config.lr_scorenet,
            "seed": config.seed,
            "l2_scorenet": config.l2_scorenet,
            "grad_accum_steps": config.grad_accum_steps,
            "vocab_size": model.vocab_size,
        },
        inputs={"features": args.features, "tokens": args.tokens},
    )
    final = log.final_weights
    print(
        f"trained {config.epochs} epochs over {len(samples)} samples; "
        f"final raw weights in [{final.min():.4f}, {final.max():.4f}]"
    )
    return 0


def cmd_score(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = load_params(args.scorenet)
    features = load_features(args.features)
    meta = load_metadata(args.meta)
    if len(meta) != features.n:
        raise ValidationError(
            f"{len(meta)} metadata records but {features.n} feature rows; these must pair 1:1"
        )
    table = compute_difficulty(params, features)
    save_difficulty(table, [rec.id for rec in meta], out / "difficulty.jsonl")
    write_manifest(
        out,
        "score",
        params={},
        inputs={"scorenet": args.scorenet, "features": args.features, "meta": args.meta},
    )
    print(f"scored {features.n} samples; difficulty in [{table.d.min():.4f}, {table.d.max():.4f}]")
    return 0


def cmd_select(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ids, table = load_difficulty(args.difficulty)
    features = load_features(args.features)
    if features.n != table.n:
        raise ValidationError(
            f"difficulty file has {table.n} rows but features have {features.n}"
        )
    if args.easiest:
        table.d = -table.d
    index = build_knn(features, args.k)
    result = select(
        table,
        index,
        m=args.m,
        gamma=args.gamma,
        diversity=not args.no_diversity,
        ids=ids,
    )
    save_selection(result, out / "selection.jsonl")
    write_manifest(
        out,
        "select",
        params={
            "m": args.m,
            "k": args.k,
            "gamma": args.gamma,
            "diversity": not args.no_diversity,
            "easiest": args.easiest,
        },
        inputs={"difficulty": args.difficulty, "features": args.features},
    )
    print(f"selected {args.m} of {table.n} samples")
    return 0


def cmd_baseline(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = load_metadata(args.meta)
    ids = [rec.id for rec in meta]
    params: dict = {"metric": args.metric, "seed": args.seed}
    inputs: dict = {"meta": args.meta}

    if args.metric in ("el2n", "grand"):
        if not args.model or not args.tokens:
            raise ValidationError(f"baseline {args.metric} needs --model and --tokens")
        samples = load_token_samples(args.tokens)
        if len(samples) != len(ids):
            raise ValidationError(
                f"{len(samples)} token samples but {len(ids)} metadata records"
            )
        models = [load_model(p) for p in args.model]
        vec = (
            el2n_scores(models[0], samples)
            if args.metric == "el2n"
            else grand_scores(models, samples)
        )
        inputs.update({f"model{i}": p for i, p in enumerate(args.model)})
        inputs["tokens"] = args.tokens
    elif args.metric == "proto":
        if not args.features:
            raise ValidationError("baseline proto needs --features")
        features = load_features(args.features)
        if features.n != len(ids):
            raise ValidationError(
                f"{features.n} feature rows but {len(ids)} metadata records"
            )
        clusters = args.clusters or default_n_clusters(features.n)
        vec = prototypicality_scores(features, clusters, args.seed)
        params["clusters"] = clusters
        inputs["features"] = args.features
    elif args.metric == "random":
        if args.m is None:
            raise ValidationError("baseline random needs --m")
        picked = random_select(len(ids), args.m, args.seed)
        # no difficulty exists for a random draw, so the field is null
        lines = [
            json.dumps({"id": ids[i], "rank": rank, "d_at_selection": None})
            for rank, i in enumerate(picked)
        ]
        (out / "selection.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        params["m"] = args.m
        write_manifest(out, "baseline", params=params, inputs=inputs)
        print(f"random baseline selected {args.m} of {len(ids)} samples")
        return 0
    elif args.metric == "external":
        if not args.scores_file:
            raise ValidationError("baseline external needs --scores-file")
        vec = ingest_external_scores(args.scores_file, ids)
        inputs["scores_file"] = args.scores_file
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown baseline metric {args.metric!r}")

    save_scores(vec, ids, out / "scores.jsonl")
    # score doubles as difficulty so the selector can rank it directly
    save_difficulty(DifficultyTable(vec.scores), ids, out / "difficulty.jsonl")
    write_manifest(out, "baseline", params=params, inputs=inputs)
    print(f"{args.metric} scores for {len(ids)} samples written to {out}")
    return 0


def cmd_retrain(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_token_samples(args.tokens)
    by_id = {s.id: s for s in samples}
    selected_ids = load_selection_ids(args.selection)
    missing = [sid for sid in selected_ids if sid not in by_id]
    if missing:
        raise ValidationError(f"selection id {missing[0]!r} not present in the token dataset")
    subset = [by_id[sid] for sid in selected_ids]
    heldout = load_token_samples(args.heldout_tokens)
    vocab = args.vocab_size or max(infer_vocab_size(samples), infer_vocab_size(heldout))
    model = ToyBigramModel.uniform(vocab)
    trained, evaluate = train_plain(
        model, subset, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed
    )
    heldout_loss = evaluate(heldout)
    save_model(trained, out / "retrained.sffm")
    (out / "metrics.json").write_text(
        json.dumps(
            {"heldout_loss": heldout_loss, "subset_size": len(subset), "vocab_size": vocab},
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    write_manifest(
        out,
        "retrain",
        params={
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "seed": args.seed,
            "vocab_size": vocab,
        },
        inputs={
            "tokens": args.tokens,
            "selection": args.selection,
            "heldout_tokens": args.heldout_tokens,
        },
    )
    print(f"retrained on {len(subset)} samples; held-out loss {heldout_loss:.4f}")
    return 0


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.what == "pearson":
        from .report import render_scatter_figure

        ids, table = load_difficulty(args.difficulty)
        meta = load_metadata(args.meta)
        lens_by_id = {rec.id: rec.text_len for rec in meta}
        missing = [sid for sid in ids if sid not in lens_by_id]
        if missing:
            raise ValidationError(f"difficulty id {missing[0]!r} has no metadata record")
        lens = np.array([lens_by_id[sid] for sid in ids], dtype=np.float64)
        r = pearson(table.d, lens)
        (out / "pearson.json").write_text(
            json.dumps({"pearson": r, "n": len(ids)}, sort_keys=True) + "\n", encoding="utf-8"
        )
        with open(out / "pearson.csv", "w", encoding="utf-8") as fh:
            fh.write("id,difficulty,text_len\n")
            for sid, d, ln in zip(ids, table.d, lens):
                fh.write(f"{sid},{float(d)!r},{int(ln)}\n")
        render_scatter_figure(
            lens, table.d, "text_len", "difficulty", r, out / "pearson.png"
        )
        write_manifest(
            out,
            "analyze-pearson",
            params={},
            inputs={"difficulty": args.difficulty, "meta": args.meta},
        )
        print(f"pearson(difficulty, text_len) = {r:.4f} over {len(ids)} samples")
        return 0

    if args.what == "coverage":
        selection_ids = load_selection_ids(args.selection)
        meta = load_metadata(args.meta)
        result = SelectionResult(
            entries=tuple(
                SelectionEntry(id=sid, rank=i, d_at_selection=0.0, index=i)
                for i, sid in enumerate(selection_ids)
            ),
            gamma=0.0,
            diversity_enabled=False,
        )
        covered, concentration = cluster_coverage(result, meta)
        (out / "coverage.json").write_text(
            json.dumps(
                {
                    "clusters_covered": covered,
                    "max_concentration": concentration,
                    "selected": len(selection_ids),
                },
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        write_manifest(
            out,
            "analyze-coverage",
            params={},
            inputs={"selection": args.selection, "meta": args.meta},
        )
        print(f"coverage: {covered} clusters, max concentration {concentration:.3f}")
        return 0

    # sweep
    from .report import render_sweep_figure

    values = [int(v) for v in args.values.split(",") if v.strip()]
    config = PipelineConfig(
        synth=_synth_spec_from_args(args),
        train=_train_config_from_args(args),
        m=args.m,
        k=args.k,
        gamma=args.gamma,
        diversity=not args.no_diversity,
        easiest=args.easiest,
        heldout_n=args.heldout_n,
        retrain_epochs=args.retrain_epochs,
        retrain_lr=args.retrain_lr,
        retrain_batch_size=args.retrain_batch_size,
    )
    try:
        report = sweep(config, args.variable, values)
    except SweepError as exc:
        exc.report.to_csv(out / "sweep.csv")
        exc.report.to_json(out / "sweep.json")
        raise
    report.to_csv(out / "sweep.csv")
    report.to_json(out / "sweep.json")
    render_sweep_figure(report, out / "sweep.png")
    write_manifest(
        out,
        "analyze-sweep",
        params={"variable": args.variable, "values": values, "m": args.m, "k": args.k,
                "gamma": args.gamma, "seed": args.seed},
        inputs={},
    )
    print(f"swept {args.variable} over {values}; best {report.metrics['best_value']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coresift",
        description="difficulty-weighted data selection pipelines",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic planted-difficulty dataset")
    _add_synth_args(p)
    p.add_argument("--heldout", type=int, default=0, help="also write N held-out samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="co-train the toy model and the scoring head")
    p.add_argument("--features", required=True)
    p.add_argument("--tokens", required=True)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--vocab-size", type=int, default=None, help="override inferred vocab size")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="compute the difficulty table from a trained scoring head")
    p.add_argument("--scorenet", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="greedy hardest-first selection with diversity penalty")
    p.add_argument("--difficulty", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--no-diversity", action="store_true")
    p.add_argument("--easiest", action="store_true", help="select lowest difficulty instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("baseline", help="compute a baseline pruning metric")
    p.add_argument("metric", choices=["el2n", "grand", "proto", "random", "external"])
    p.add_argument("--meta", required=True)
    p.add_argument("--model", nargs="+", help="model checkpoint(s) for el2n/grand")
    p.add_argument("--tokens")
    p.add_argument("--features")
    p.add_argument("--clusters", type=int, help="k-means cluster count (default: sqrt n)")
    p.add_argument("--scores-file", dest="scores_file")
    p.add_argument("--m", type=int, help="subset size for the random baseline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("retrain", help="retrain the toy model on a selection")
    p.add_argument("--tokens", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--heldout-tokens", dest="heldout_tokens", required=True)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("analyze", help="reports: pearson, coverage, or a pipeline sweep")
    p.add_argument("what", choices=["pearson", "coverage", "sweep"])
    p.add_argument("--difficulty")
    p.add_argument("--meta")
    p.add_argument("--selection")
    p.add_argument("--variable", choices=["pruning-size", "batch-size"], default="pruning-size")
    p.add_argument("--values", default="", help="comma-separated sweep values")
    _add_synth_args(p)
    _add_train_args(p)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--no-diversity", action="store_true")
    p.add_argument("--easiest", action="store_true")
    p.add_argument("--heldout-n", dest="heldout_n", type=int, default=200)
    p.add_argument("--retrain-epochs", dest="retrain_epochs", type=int, default=3)
    p.add_argument("--retrain-lr", dest="retrain_lr", type=float, default=0.5)
    p.add_argument("--retrain-batch-size", dest="retrain_batch_size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CoresiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
