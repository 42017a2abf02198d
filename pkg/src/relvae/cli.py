"""Command-line interface.

Subcommands: train, eval, predict, curve, synth, gradcheck.  Every command
exits 0 on success and nonzero with a message on stderr otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import (
    CorpusFormatError,
    DatasetSplit,
    LabelSchema,
    build_vocab,
    generate_synthetic_corpus,
    parse_corpus,
    serialize_corpus,
    synthetic_schema,
)
from .embeddings import load_pretrained
from .experiments import CurveReport, run_learning_curve
from .metrics import evaluate
from .networks import ModelConfig
from .rng import SeededRng
from .semivae import SemiVAE, TrainConfig, predict, train


def _read_config_file(path):
    """Optional JSON settings file: {"model": {...}, "train": {...}}."""
    if path is None:
        return {}, {}
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(blob, dict):
        raise ValueError(f"{path}: expected a JSON object")
    unknown = set(blob) - {"model", "train"}
    if unknown:
        raise ValueError(f"{path}: unknown sections {sorted(unknown)}")
    return blob.get("model", {}), blob.get("train", {})


def _build_configs(args, schema, model_overrides, train_overrides):
    model_kw = dict(model_overrides)
    stated = model_kw.pop("n_classes", None)
    if stated is not None and stated != len(schema):
        raise ValueError(
            f"config says {stated} classes, label schema has {len(schema)}")
    model_config = ModelConfig(n_classes=len(schema), **model_kw)

    train_kw = dict(train_overrides)
    for flag in ("seed", "alpha", "epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            train_kw[flag] = value
    train_config = TrainConfig(**train_kw)
    return model_config, train_config


def _cmd_train(args) -> int:
    schema = LabelSchema.from_file(args.labels)
    model_overrides, train_overrides = _read_config_file(args.config)
    model_config, train_config = _build_configs(
        args, schema, model_overrides, train_overrides)

    labeled = parse_corpus(args.labeled_file, schema)
    val = parse_corpus(args.val_file, schema)
    unlabeled = []
    if args.unlabeled_file:
        unlabeled = [dataclasses.replace(inst, label=None)
                     for inst in parse_corpus(args.unlabeled_file, schema)]
    test = parse_corpus(args.test_file, schema) if args.test_file else []

    missing = [inst.uid for inst in labeled if inst.label is None]
    if missing:
        raise ValueError(
            f"labeled file has unlabeled instances, e.g. {missing[:3]}")
    if args.labeled_count is not None:
        if args.labeled_count > len(labeled):
            raise ValueError(
                f"--labeled-count {args.labeled_count} exceeds the "
                f"{len(labeled)} labeled instances")
        rng = SeededRng(train_config.seed).fork("subsample")
        order = rng.permutation(len(labeled))
        labeled = [labeled[i] for i in order[:args.labeled_count]]

    split = DatasetSplit(labeled, unlabeled, val, test)
    vocab = build_vocab(labeled + unlabeled)
    rng = SeededRng(train_config.seed)
    tables = None
    if args.embeddings:
        tables = load_pretrained(args.embeddings, vocab, rng.fork("emb"),
                                 model_config.word_dim, model_config.pos_dim,
                                 model_config.max_dist)
    model = SemiVAE(model_config, vocab, schema, rng.fork("model"),
                    tables=tables)

    def log(line):
        print(line, flush=True)

    model, history = train(model, split, train_config, log=log)
    best_f1 = max(h.validation.micro_f1 for h in history)
    save_checkpoint(model, args.out, extra={
        "val_micro_f1": best_f1,
        "epochs": train_config.epochs,
        "seed": train_config.seed,
        "labeled": len(labeled),
        "unlabeled": len(unlabeled),
    })
    print(f"saved {args.out} (best validation micro-F1 {best_f1:.4f})")
    if test:
        metrics = evaluate(predict(model, test),
                           [i.label for i in test], schema)
        print(metrics.summary(schema))
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    try:
        instances = parse_corpus(args.test_file, model.schema)
    except CorpusFormatError as exc:
        raise ValueError(
            f"test file does not match the model's label schema "
            f"{list(model.schema.names)}: {exc}") from exc
    missing = [inst.uid for inst in instances if inst.label is None]
    if missing:
        raise ValueError(f"cannot score unlabeled instances, e.g. {missing[:3]}")
    metrics = evaluate(predict(model, instances),
                       [i.label for i in instances], model.schema)
    print(metrics.summary(model.schema))
    return 0


def _cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    instances = parse_corpus(args.input, model.schema)
    classes = predict(model, instances)
    with open(args.output, "w", encoding="utf-8") as fh:
        for inst, c in zip(instances, classes):
            fh.write(f"{inst.uid}\t{model.schema.name(c)}\n")
    print(f"wrote {len(instances)} predictions to {args.output}")
    return 0


def _cmd_curve(args) -> int:
    if args.labels:
        schema = LabelSchema.from_file(args.labels)
    else:
        schema = _infer_schema_from_file(args.corpus)
    instances = parse_corpus(args.corpus, schema)
    model_overrides, train_overrides = _read_config_file(args.config)
    model_config, train_config = _build_configs(
        args, schema, model_overrides, train_overrides)
    counts = [int(c) for c in args.counts.split(",") if c]

    report = run_learning_curve(
        instances, schema, counts, args.seeds, model_config, train_config,
        val_count=args.val_count, test_count=args.test_count,
        base_seed=args.seed or 0, unlabeled_count=args.unlabeled_count,
        log=lambda line: print(line, flush=True))
    report.to_tsv(args.out)
    plot_path = str(Path(args.out).with_suffix(".svg"))
    report.plot(plot_path)
    print(f"wrote {args.out} and {plot_path}")
    for s in report.aggregate():
        print(f"labeled={s.labeled_count:<6d} {s.arm:<11s} "
              f"F1 {s.mean_f1:.4f} +/- {s.std_f1:.4f} over {s.n_runs} seeds")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def _infer_schema_from_file(path):
    # labels must be read with *some* schema; collect the raw label column
    names = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) == 5 and fields[4] != "-":
                names.add(fields[4])
    if not names:
        raise ValueError(f"{path}: no labels to infer a schema from")
    return LabelSchema.from_names(sorted(names))


def _schema_file_text(schema: LabelSchema) -> str:
    lines = [f"negative={schema.name(schema.negative_index)}"]
    lines.extend(schema.names)
    return "\n".join(lines) + "\n"


def _cmd_synth(args) -> int:
    schema = synthetic_schema(args.classes)
    instances = generate_synthetic_corpus(
        args.classes, args.instances, args.vocab_size,
        args.trigger_strength, (8, 30), SeededRng(args.seed))
    serialize_corpus(instances, schema, args.out)
    labels_path = args.out + ".labels"
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write(_schema_file_text(schema))
    print(f"wrote {len(instances)} instances to {args.out}, "
          f"schema to {labels_path}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import report, run_all

    ok = report(run_all())
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relvae",
        description="Semi-supervised VAE for sentence-level relation extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--labeled-file", required=True)
    p.add_argument("--unlabeled-file")
    p.add_argument("--val-file", required=True)
    p.add_argument("--test-file")
    p.add_argument("--labels", required=True, help="label schema file")
    p.add_argument("--embeddings", help="pretrained word vectors, text format")
    p.add_argument("--config", help="JSON settings: {\"model\": {}, \"train\": {}}")
    p.add_argument("--seed", type=int)
    p.add_argument("--labeled-count", type=int,
                   help="subsample the labeled file to this many instances")
    p.add_argument("--alpha", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled file")
    p.add_argument("--model", required=True)
    p.add_argument("--test-file", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="write predictions for a corpus file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("curve", help="learning-curve sweep over labeled counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--counts", required=True,
                   help="comma-separated labeled counts, e.g. 50,200,1000")
    p.add_argument("--seeds", type=int, required=True, help="seeds per cell")
    p.add_argument("--out", required=True, help="TSV output path")
    p.add_argument("--labels", help="label schema file (default: infer)")
    p.add_argument("--config", help="JSON settings: {\"model\": {}, \"train\": {}}")
    p.add_argument("--val-count", type=int, default=500)
    p.add_argument("--test-count", type=int, default=500)
    p.add_argument("--unlabeled-count", type=int,
                   help="cap each cell's unlabeled pool (default: no cap)")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("synth", help="generate a synthetic trigger corpus")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--instances", type=int, required=True)
    p.add_argument("--trigger-strength", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=40)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, CorpusFormatError, CheckpointError,
            FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
