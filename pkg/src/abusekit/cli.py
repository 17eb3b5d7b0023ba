"""Command-line front end: prepare, train, predict, evaluate, inspect-embeddings.

Every command is batch-mode and non-interactive.  Exit codes: 0 success,
2 usage/config/data error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .corpus import (LANGUAGES, assemble_examples, load_external,
                     merge_external, parse_uli_csv, read_dataset,
                     split_train_test, write_dataset)
from .embeddings import (build_matrix, parse_vector_file, read_cache,
                         write_cache)
from .errors import (AbusekitError, ConfigurationError, NumericError,
                     ParseError, SchemaError)
from .layers import AdamConfig
from .metrics import classification_report
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .text import PreprocessConfig, Vocabulary, encode_batch
from .text import preprocess as preprocess_text
from .training import (TrainConfig, emit_curves, ensemble_predict,
                       head_keys_for_task, run_cv, write_report)

__all__ = ["entrypoint", "main"]

_TASK_TO_KEYS = {1: ("question_1",), 2: ("question_1",),
                 3: ("question_1", "question_3")}


def _resolve_threads(flag_value: int | None, config_value: int | None) -> int:
    """Priority: --threads flag, ABUSE_DETECT_THREADS env, config file, 1."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get("ABUSE_DETECT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(
                f"ABUSE_DETECT_THREADS={env!r} is not an integer") from None
    if config_value is not None:
        return config_value
    return 1


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


def load_run_config(path) -> dict:
    """Read and strictly validate a run config JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=str(path)) from None
    if not isinstance(raw, dict):
        raise ConfigurationError("run config must be a JSON object")
    _check_keys(raw, {"data", "preprocess", "model", "train", "output_dir"},
                "run config")

    data = raw.get("data", {})
    _check_keys(data, {"train", "embeddings", "embeddings_cache"}, "data section")
    for required in ("train", "embeddings"):
        if required not in data:
            raise ConfigurationError(f"data section needs a {required!r} path")

    train_section = dict(raw.get("train", {}))
    _check_keys(train_section,
                {"task", "language", "folds", "batch_size", "epochs", "seed",
                 "threads", "optimizer", "ensemble"},
                "train section")
    for required in ("task", "language"):
        if required not in train_section:
            raise ConfigurationError(f"train section needs {required!r}")
    optimizer_section = train_section.pop("optimizer", {})
    _check_keys(optimizer_section, {"lr", "beta1", "beta2", "eps"},
                "train.optimizer")
    ensemble = train_section.pop("ensemble", "average")
    if ensemble not in ("average", "best"):
        raise ConfigurationError(f"ensemble must be 'average' or 'best', got {ensemble!r}")

    model_section = raw.get("model", {})
    if "num_heads" in model_section:
        raise ConfigurationError("num_heads is derived from the task; remove it")

    prep_section = raw.get("preprocess", {})
    _check_keys(prep_section,
                {"stopword_files", "emoji_range_file", "strip_urls",
                 "strip_mentions", "strip_html", "strip_hashmark",
                 "lowercase_latin"},
                "preprocess section")

    return {
        "data": data,
        "train": train_section,
        "optimizer": optimizer_section,
        "ensemble": ensemble,
        "model": model_section,
        "preprocess": prep_section,
        "output_dir": raw.get("output_dir"),
    }


def _build_train_config(section: dict, optimizer: dict,
                        seed_override: int | None, threads: int) -> TrainConfig:
    task = section["task"]
    language = section["language"]
    overrides = {k: v for k, v in section.items()
                 if k in ("folds", "batch_size", "epochs", "seed")}
    if seed_override is not None:
        overrides["seed"] = seed_override
    config = TrainConfig.for_task(task, language, **overrides)
    config.threads = threads
    if optimizer:
        config.optimizer = AdamConfig(**{**vars(AdamConfig()), **optimizer})
    config.validate()
    return config


def _build_prep_config(section: dict) -> PreprocessConfig:
    flags = {k: section[k] for k in
             ("strip_urls", "strip_mentions", "strip_html", "strip_hashmark",
              "lowercase_latin") if k in section}
    if "stopword_files" in section:
        return PreprocessConfig.from_files(
            section["stopword_files"], section.get("emoji_range_file"), **flags)
    if "emoji_range_file" in section:
        return PreprocessConfig.from_files({}, section["emoji_range_file"], **flags)
    return PreprocessConfig.default(**flags)


def _load_vectors(path, cache_path=None):
    """Parse an embedding file; transparently use/build a binary cache."""
    if cache_path and os.path.exists(cache_path):
        return read_cache(cache_path)
    with open(path, "rb") as fh:
        is_cache = fh.read(4) == b"EMB1"
    vectors = read_cache(path) if is_cache else parse_vector_file(path)
    if cache_path:
        write_cache(vectors, cache_path)
    return vectors


def _parse_external_arg(value: str) -> tuple[str, str]:
    if "=" not in value:
        raise ConfigurationError(
            f"--external expects SOURCE=PATH, got {value!r}")
    source, path = value.split("=", 1)
    return source.strip().lower(), path


def cmd_prepare(args) -> int:
    keys = _TASK_TO_KEYS[args.task]
    rows = parse_uli_csv(args.input)
    rows = [r for r in rows if r.language == args.language]
    if not rows:
        raise SchemaError(f"no rows for language {args.language!r}", path=args.input)
    total_posts = len({r.id for r in rows})
    examples = assemble_examples(rows, keys)
    dropped = total_posts - len(examples)

    split = split_train_test(examples, ratio=args.ratio, seed=args.seed,
                             stratified=args.stratified)
    train, test = split.train, split.test

    external_counts = {}
    for source, path in (args.external or []):
        extra = load_external(path, source, args.language)
        # External corpora augment training only; the held-out side stays
        # pure shared-task data.
        train = merge_external(train, extra)
        external_counts[source] = external_counts.get(source, 0) + len(extra)

    os.makedirs(args.out, exist_ok=True)
    write_dataset(train, os.path.join(args.out, "train.jsonl"))
    write_dataset(test, os.path.join(args.out, "test.jsonl"))

    def label_counts(items):
        counts = {}
        for ex in items:
            for key, value in ex.labels.items():
                bucket = counts.setdefault(key, {"0": 0, "1": 0})
                bucket[str(value)] += 1
        return counts

    manifest = {
        "task": args.task,
        "language": args.language,
        "ratio": args.ratio,
        "seed": args.seed,
        "stratified": args.stratified,
        "posts_parsed": total_posts,
        "posts_kept": len(examples),
        "posts_dropped": dropped,
        "train_count": len(train),
        "test_count": len(test),
        "external_counts": external_counts,
        "train_label_counts": label_counts(train),
        "test_label_counts": label_counts(test),
    }
    with open(os.path.join(args.out, "prepare.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"posts parsed: {total_posts}   kept: {len(examples)}   dropped: {dropped}")
    print(f"train: {len(train)} examples   test: {len(test)} examples")
    for key, bucket in sorted(label_counts(train).items()):
        print(f"train label {key}: 0={bucket['0']} 1={bucket['1']}")
    for source, count in sorted(external_counts.items()):
        print(f"external {source}: {count} examples merged into train")
    return 0


def cmd_train(args) -> int:
    config = load_run_config(args.config)
    out_dir = args.out_dir or config["output_dir"]
    if not out_dir:
        raise ConfigurationError("give --out-dir or output_dir in the config")

    threads = _resolve_threads(args.threads, config["train"].get("threads"))
    train_section = {k: v for k, v in config["train"].items() if k != "threads"}
    train_config = _build_train_config(train_section, config["optimizer"],
                                       args.seed, threads)
    prep_config = _build_prep_config(config["preprocess"])

    model_config = ModelConfig.from_dict(config["model"]) if config["model"] \
        else ModelConfig()

    examples = read_dataset(config["data"]["train"])
    if not examples:
        raise ConfigurationError("training dataset is empty")
    vectors = _load_vectors(config["data"]["embeddings"],
                            config["data"].get("embeddings_cache"))

    result = run_cv(examples, train_config, vectors, model_config, prep_config)

    os.makedirs(out_dir, exist_ok=True)
    for fold, state in enumerate(result.fold_states):
        save_checkpoint(state, os.path.join(out_dir, f"fold{fold}"))
    result.vocab.save(os.path.join(out_dir, "vocab.txt"))
    with open(os.path.join(out_dir, "preprocess.json"), "w", encoding="utf-8") as fh:
        json.dump(result.prep_config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "ensemble.json"), "w", encoding="utf-8") as fh:
        json.dump({"mode": config["ensemble"]}, fh)
        fh.write("\n")
    write_report(result.report, os.path.join(out_dir, "run_report.json"))
    emit_curves(result.report, os.path.join(out_dir, "curves.csv"),
                os.path.join(out_dir, "curves.svg"))

    report = result.report
    print(f"task {report.task} ({report.language})  folds={train_config.folds}  "
          f"epochs={train_config.epochs}  batch={train_config.batch_size}")
    print(f"vocab size: {report.vocab_size}   embedding coverage: "
          f"{report.embedding_coverage:.3f}")
    header = f"{'fold':>4}  {'head':>4}  {'precision':>9}  {'recall':>9}  {'macro_f1':>9}"
    print(header)
    for fold_report in report.folds:
        for key in report.head_keys:
            cr = fold_report.head_reports[key]
            print(f"{fold_report.fold:>4}  {key:>4}  {cr.macro_precision:>9.4f}  "
                  f"{cr.macro_recall:>9.4f}  {cr.macro_f1:>9.4f}")
    for key in report.head_keys:
        avg = report.averaged[key]
        print(f" avg  {key:>4}  {avg['macro_precision']:>9.4f}  "
              f"{avg['macro_recall']:>9.4f}  {avg['macro_f1']:>9.4f}")
    print(f"outputs written to {out_dir}")
    return 0


def _read_id_text_csv(path) -> tuple[list[int], list[str]]:
    ids, texts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("file is empty", path=path)
        fields = {name.strip().lower(): name for name in reader.fieldnames}
        for required in ("id", "text"):
            if required not in fields:
                raise SchemaError(f"missing required column {required!r}", path=path)
        for index, record in enumerate(reader):
            raw = (record[fields["id"]] or "").strip()
            try:
                ids.append(int(float(raw)))
            except ValueError:
                raise ParseError(f"row {index}: non-integer id {raw!r}",
                                 path=path) from None
            texts.append(record[fields["text"]])
    return ids, texts


def _read_label_csv(path, column: str = "label") -> dict[int, int]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("file is empty", path=path)
        fields = {name.strip().lower(): name for name in reader.fieldnames}
        for required in ("id", column):
            if required not in fields:
                raise SchemaError(f"missing required column {required!r}", path=path)
        for index, record in enumerate(reader):
            try:
                post_id = int(float((record[fields["id"]] or "").strip()))
                label = int(float((record[fields[column]] or "").strip()))
            except ValueError:
                raise ParseError(f"row {index}: bad id/label", path=path) from None
            if label not in (0, 1):
                raise ParseError(f"row {index}: label must be 0 or 1, got {label}",
                                 path=path)
            out[post_id] = label
    return out


def cmd_predict(args) -> int:
    run_dir = args.run_dir
    report_path = os.path.join(run_dir, "run_report.json")
    try:
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"no run_report.json under {run_dir}") from None

    head_keys = report["head_keys"]
    language = report["language"]
    seq_len = report["model_config"]["seq_len"]
    folds = report["train_config"]["folds"]

    vocab = Vocabulary.load(os.path.join(run_dir, "vocab.txt"))
    with open(os.path.join(run_dir, "preprocess.json"), encoding="utf-8") as fh:
        prep_config = PreprocessConfig.from_dict(json.load(fh))

    states = []
    for fold in range(folds):
        fold_dir = os.path.join(run_dir, f"fold{fold}")
        if not os.path.isdir(fold_dir):
            raise ConfigurationError(f"missing checkpoint directory {fold_dir}")
        states.append(load_checkpoint(fold_dir))

    mode = args.ensemble
    if mode is None:
        mode = "average"
        ensemble_path = os.path.join(run_dir, "ensemble.json")
        if os.path.exists(ensemble_path):
            with open(ensemble_path, encoding="utf-8") as fh:
                mode = json.load(fh).get("mode", "average")
    if mode == "best":
        scores = [
            float(np.mean([fr["head_reports"][k]["macro_f1"] for k in head_keys]))
            for fr in report["folds"]
        ]
        states = [states[int(np.argmax(scores))]]

    ids, texts = _read_id_text_csv(args.input)
    token_lists = [preprocess_text(t, language, prep_config) for t in texts]
    sequences = encode_batch(token_lists, vocab, max_len=seq_len)
    labels = ensemble_predict(states, sequences)

    if len(head_keys) == 1:
        header = "id,label"
        rows = (f"{post_id},{labels[0][i]}" for i, post_id in enumerate(ids))
    else:
        header = "id," + ",".join(f"label_{k}" for k in head_keys)
        rows = (f"{post_id}," + ",".join(str(labels[h][i]) for h in range(len(head_keys)))
                for i, post_id in enumerate(ids))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {len(ids)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    golds = _read_label_csv(args.gold)
    preds = _read_label_csv(args.pred, column=args.column)
    gold_ids = set(golds)
    pred_ids = set(preds)
    if gold_ids != pred_ids:
        offenders = sorted(gold_ids ^ pred_ids)[:10]
        raise SchemaError(
            f"gold and prediction ids differ; first offenders: {offenders}",
            path=args.pred)
    ordered = sorted(golds)
    report = classification_report(
        np.array([golds[i] for i in ordered]),
        np.array([preds[i] for i in ordered]),
        num_classes=2)
    json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def cmd_inspect_embeddings(args) -> int:
    vectors = _load_vectors(args.file)
    print(f"dimension: {vectors.dimension}")
    print(f"entries: {len(vectors)}")
    print(f"header: {'yes' if vectors.had_header else 'no'}")
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
        table = build_matrix(vocab, vectors)
        print(f"coverage: {table.coverage}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abusekit",
        description="CNN-BiLSTM gendered-abuse classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest raw CSVs into canonical datasets")
    p.add_argument("--input", required=True, help="shared-task CSV path")
    p.add_argument("--language", required=True, choices=list(LANGUAGES))
    p.add_argument("--task", required=True, type=int, choices=[1, 2, 3])
    p.add_argument("--external", action="append", type=_parse_external_arg,
                   metavar="SOURCE=PATH",
                   help="external corpus to merge into train (macd=... or multilate=...)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratified", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run k-fold cross-validated training")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out-dir", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int,
                   help="fold-parallel workers (env ABUSE_DETECT_THREADS)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write submission CSV from a trained run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--input", required=True, help="CSV with id,text columns")
    p.add_argument("--out", required=True, help="submission CSV path")
    p.add_argument("--ensemble", choices=["average", "best"],
                   help="fold combination (default: run setting, else average)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--gold", required=True, help="CSV with id,label")
    p.add_argument("--pred", required=True, help="CSV with id,label")
    p.add_argument("--column", default="label",
                   help="prediction column name (label_1/label_3 for task 3 files)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-embeddings", help="summarize a vector file")
    p.add_argument("--file", required=True)
    p.add_argument("--vocab", help="vocabulary file for coverage")
    p.set_defaults(func=cmd_inspect_embeddings)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # parse_args may raise too: --external validation runs inside argparse
        args = parser.parse_args(argv)
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except AbusekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> int:
    return main()
