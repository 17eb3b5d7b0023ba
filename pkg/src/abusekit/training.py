"""Cross-validated training runs: fold loop, curves, fold ensembling.

A run builds one vocabulary from the whole training partition, trains a
fresh seeded model per fold, records per-epoch loss/accuracy, scores each
held-out fold, and averages macro scores across folds.  Test predictions
average softmax probabilities over the fold models.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from xml.sax.saxutils import escape

import numpy as np

from .corpus import LANGUAGES, LabeledExample, kfold_indices
from .embeddings import WordVectorFile, build_matrix
from .errors import ConfigurationError, DataIntegrityError
from .layers import AdamConfig, adam_step, softmax_cross_entropy
from .metrics import ClassificationReport, classification_report
from .model import (ModelConfig, Network, build_model, labels_from_probs,
                    train_step)
from .text import PreprocessConfig, Vocabulary, build_vocab, encode_batch
from .text import preprocess as preprocess_text

__all__ = [
    "CvResult",
    "EpochRecord",
    "FoldReport",
    "RunReport",
    "TrainConfig",
    "best_fold_index",
    "emit_curves",
    "ensemble_predict",
    "evaluate",
    "head_keys_for_task",
    "one_hot",
    "read_curves",
    "run_cv",
    "train_epoch",
    "write_report",
]

_TASK_DEFAULTS = {1: (32, 5), 2: (64, 7), 3: (32, 5)}


def head_keys_for_task(task: int) -> list[str]:
    """Label keys the given task trains on (two heads only for task 3)."""
    return ["1", "3"] if task == 3 else ["1"]


@dataclass
class TrainConfig:
    task: int = 1
    language: str = "en"
    folds: int = 5
    batch_size: int = 32
    epochs: int = 5
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    threads: int = 1

    @classmethod
    def for_task(cls, task: int, language: str, **overrides) -> "TrainConfig":
        """Defaults per task: batch 32 / 5 epochs, except task 2 at 64 / 7."""
        if task not in _TASK_DEFAULTS:
            raise ConfigurationError(f"task must be 1, 2, or 3, got {task}")
        batch, epochs = _TASK_DEFAULTS[task]
        settings = {"batch_size": batch, "epochs": epochs, **overrides}
        config = cls(task=task, language=language, **settings)
        config.validate()
        return config

    def validate(self) -> None:
        if self.task not in (1, 2, 3):
            raise ConfigurationError(f"task must be 1, 2, or 3, got {self.task}")
        if self.language not in LANGUAGES:
            raise ConfigurationError(f"language must be one of {sorted(LANGUAGES)}")
        if self.folds < 2:
            raise ConfigurationError("folds must be at least 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be positive")
        if self.threads < 1:
            raise ConfigurationError("threads must be positive")

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in
                ("task", "language", "folds", "batch_size", "epochs", "seed", "threads")}
        data["optimizer"] = {"lr": self.optimizer.lr, "beta1": self.optimizer.beta1,
                             "beta2": self.optimizer.beta2, "eps": self.optimizer.eps}
        return data


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "train_accuracy": self.train_accuracy,
                "val_loss": self.val_loss, "val_accuracy": self.val_accuracy}


@dataclass
class FoldReport:
    fold: int
    epochs: list[EpochRecord]
    head_reports: dict[str, ClassificationReport]

    def to_dict(self) -> dict:
        return {"fold": self.fold,
                "epochs": [r.to_dict() for r in self.epochs],
                "head_reports": {k: r.to_dict() for k, r in self.head_reports.items()}}


@dataclass
class RunReport:
    task: int
    language: str
    head_keys: list[str]
    folds: list[FoldReport]
    averaged: dict[str, dict[str, float]]
    train_config: dict
    model_config: dict
    preprocess_summary: dict
    vocab_size: int
    embedding_coverage: float

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "language": self.language,
            "head_keys": self.head_keys,
            "folds": [f.to_dict() for f in self.folds],
            "averaged": self.averaged,
            "train_config": self.train_config,
            "model_config": self.model_config,
            "preprocess_summary": self.preprocess_summary,
            "vocab_size": self.vocab_size,
            "embedding_coverage": self.embedding_coverage,
        }


@dataclass
class CvResult:
    """Everything a finished run produces, models included."""

    report: RunReport
    fold_states: list[Network]
    vocab: Vocabulary
    prep_config: PreprocessConfig


def one_hot(labels: np.ndarray, classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((len(labels), classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _prep_summary(prep: PreprocessConfig) -> dict:
    # Declared pipeline choices, stated for comparability between runs.
    return {
        "tokenizer": "unicode whitespace split, punctuation-only tokens dropped",
        "stopword_counts": {lang: len(words) for lang, words in sorted(prep.stopwords.items())},
        "emoji_range_count": len(prep.emoji_ranges),
        "strip_urls": prep.strip_urls,
        "strip_mentions": prep.strip_mentions,
        "strip_html": prep.strip_html,
        "strip_hashmark": prep.strip_hashmark,
        "lowercase_latin": prep.lowercase_latin,
    }


def train_epoch(network: Network, sequences: np.ndarray,
                labels_per_head: list[np.ndarray], batch_size: int,
                optimizer: AdamConfig, rng: np.random.Generator
                ) -> tuple[float, float]:
    """One shuffled pass; returns (mean per-example loss, accuracy).

    Accuracy is measured by an eval-mode pass after the updates, averaged
    across heads.  The last incomplete batch is trained, not dropped.
    """
    n = len(sequences)
    order = rng.permutation(n)
    onehots = [one_hot(labels) for labels in labels_per_head]
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        batch_targets = [oh[idx] for oh in onehots]
        loss = train_step(network, sequences[idx], batch_targets, optimizer, rng=rng)
        loss_sum += loss * len(idx)
    _, accuracy, _ = evaluate(network, sequences, labels_per_head, batch_size)
    return loss_sum / n, accuracy


def evaluate(network: Network, sequences: np.ndarray,
             labels_per_head: list[np.ndarray], batch_size: int = 256
             ) -> tuple[float, float, list[np.ndarray]]:
    """Eval-mode (mean loss, accuracy averaged over heads, per-head preds)."""
    n = len(sequences)
    onehots = [one_hot(labels) for labels in labels_per_head]
    num_heads = len(network.heads)
    loss_sum = 0.0
    preds: list[list[np.ndarray]] = [[] for _ in range(num_heads)]
    for start in range(0, n, batch_size):
        stop = start + batch_size
        shared = network.trunk_forward(sequences[start:stop])
        for h, head in enumerate(network.heads):
            logits = head.forward(shared)
            loss, _ = softmax_cross_entropy(logits, onehots[h][start:stop])
            loss_sum += loss * (min(stop, n) - start) / num_heads
            probs = np.exp(logits - logits.max(axis=1, keepdims=True))
            probs /= probs.sum(axis=1, keepdims=True)
            preds[h].append(labels_from_probs(probs))
    merged = [np.concatenate(p) for p in preds]
    accuracy = float(np.mean([
        (merged[h] == np.asarray(labels_per_head[h])).mean()
        for h in range(num_heads)]))
    return loss_sum / n, accuracy, merged


def _train_fold(fold: int, seed: int, model_config: ModelConfig,
                table, sequences, label_arrays, head_keys,
                folds, config: TrainConfig) -> tuple[FoldReport, Network]:
    val_idx = folds.val_indices(fold)
    train_idx = folds.train_indices(fold)
    assert not set(val_idx.tolist()) & set(train_idx.tolist())

    rng = np.random.default_rng(seed)
    network = build_model(replace(model_config, seed=seed), table, rng=rng)
    train_labels = [label_arrays[k][train_idx] for k in head_keys]
    val_labels = [label_arrays[k][val_idx] for k in head_keys]

    records = []
    val_preds = None
    for epoch in range(1, config.epochs + 1):
        train_loss, train_acc = train_epoch(
            network, sequences[train_idx], train_labels,
            config.batch_size, config.optimizer, rng)
        val_loss, val_acc, val_preds = evaluate(network, sequences[val_idx], val_labels)
        records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
    head_reports = {
        key: classification_report(val_labels[h], val_preds[h],
                                   num_classes=model_config.classes_per_head)
        for h, key in enumerate(head_keys)
    }
    return FoldReport(fold=fold, epochs=records, head_reports=head_reports), network


def run_cv(examples: list[LabeledExample], config: TrainConfig,
           vectors: WordVectorFile, model_config: ModelConfig | None = None,
           prep_config: PreprocessConfig | None = None) -> CvResult:
    """Full k-fold run over labeled examples.

    The vocabulary comes from all given examples (the training partition),
    so every fold shares one embedding matrix.
    """
    config.validate()
    if model_config is None:
        model_config = ModelConfig()
    if prep_config is None:
        prep_config = PreprocessConfig.default()
    head_keys = head_keys_for_task(config.task)
    model_config = replace(model_config, num_heads=len(head_keys))
    model_config.validate()

    n = len(examples)
    if n < config.folds:
        raise ConfigurationError(f"{n} examples cannot fill {config.folds} folds")
    for ex in examples:
        missing = [k for k in head_keys if k not in ex.labels]
        if missing:
            raise DataIntegrityError(f"example lacks labels for keys {missing}")

    token_lists = [preprocess_text(ex.text, ex.language, prep_config)
                   for ex in examples]
    vocab = build_vocab(token_lists)
    table = build_matrix(vocab, vectors, expected_dim=model_config.embed_dim)
    sequences = encode_batch(token_lists, vocab, max_len=model_config.seq_len)
    label_arrays = {k: np.array([ex.labels[k] for ex in examples]) for k in head_keys}

    folds = kfold_indices(n, k=config.folds, seed=config.seed)
    fold_seeds = np.random.SeedSequence(config.seed).generate_state(config.folds)

    def job(fold):
        return _train_fold(fold, int(fold_seeds[fold]), model_config, table,
                           sequences, label_arrays, head_keys, folds, config)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(job, range(config.folds)))
    else:
        outcomes = [job(fold) for fold in range(config.folds)]

    fold_reports = [fr for fr, _ in outcomes]
    states = [net for _, net in outcomes]

    averaged = {}
    for key in head_keys:
        per_fold = [fr.head_reports[key] for fr in fold_reports]
        averaged[key] = {
            "macro_precision": float(np.mean([r.macro_precision for r in per_fold])),
            "macro_recall": float(np.mean([r.macro_recall for r in per_fold])),
            "macro_f1": float(np.mean([r.macro_f1 for r in per_fold])),
            "macro_f1_class_mean": float(np.mean([r.macro_f1_class_mean for r in per_fold])),
            "accuracy": float(np.mean([r.accuracy for r in per_fold])),
        }

    report = RunReport(
        task=config.task,
        language=config.language,
        head_keys=head_keys,
        folds=fold_reports,
        averaged=averaged,
        train_config=config.to_dict(),
        model_config=model_config.to_dict(),
        preprocess_summary=_prep_summary(prep_config),
        vocab_size=len(vocab),
        embedding_coverage=table.coverage,
    )
    return CvResult(report=report, fold_states=states, vocab=vocab,
                    prep_config=prep_config)


def ensemble_predict(fold_states: list[Network], test_sequences: np.ndarray,
                     batch_size: int = 256) -> list[np.ndarray]:
    """Average per-head softmax probabilities over fold models, then argmax
    (exact two-way ties go to class 1)."""
    if not fold_states:
        raise ConfigurationError("no fold models given")
    reference = {k: v for k, v in fold_states[0].config.to_dict().items() if k != "seed"}
    for state in fold_states[1:]:
        other = {k: v for k, v in state.config.to_dict().items() if k != "seed"}
        if other != reference:
            raise ConfigurationError("fold models disagree on configuration")

    test_sequences = np.asarray(test_sequences)
    num_heads = len(fold_states[0].heads)
    outs = [[] for _ in range(num_heads)]
    for start in range(0, len(test_sequences), batch_size):
        batch = test_sequences[start:start + batch_size]
        mean_probs = None
        for state in fold_states:
            probs = state.forward(batch)
            if mean_probs is None:
                mean_probs = [p / len(fold_states) for p in probs]
            else:
                for h, p in enumerate(probs):
                    mean_probs[h] += p / len(fold_states)
        for h in range(num_heads):
            outs[h].append(labels_from_probs(mean_probs[h]))
    return [np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
            for chunks in outs]


def best_fold_index(report: RunReport) -> int:
    """Fold whose validation macro-F1 (mean over heads) is highest."""
    scores = [
        float(np.mean([fr.head_reports[k].macro_f1 for k in report.head_keys]))
        for fr in report.folds
    ]
    return int(np.argmax(scores))


def write_report(report: RunReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


_CURVE_FIELDS = ("fold", "epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def emit_curves(report: RunReport, csv_path, svg_path=None) -> None:
    """Write fold x epoch curves as CSV, optionally plus a small SVG chart.

    Floats are written with repr so a re-parse reproduces them exactly.
    """
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_CURVE_FIELDS) + "\n")
        for fr in report.folds:
            for rec in fr.epochs:
                fh.write(",".join([
                    str(fr.fold), str(rec.epoch),
                    repr(rec.train_loss), repr(rec.train_accuracy),
                    repr(rec.val_loss), repr(rec.val_accuracy)]) + "\n")
    if svg_path is not None:
        with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_render_curves_svg(report))


def read_curves(csv_path) -> list[dict]:
    """Re-parse an emit_curves CSV into row dicts with numeric values."""
    rows = []
    with open(csv_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "fold": int(row["fold"]),
                "epoch": int(row["epoch"]),
                "train_loss": float(row["train_loss"]),
                "train_acc": float(row["train_acc"]),
                "val_loss": float(row["val_loss"]),
                "val_acc": float(row["val_acc"]),
            })
    return rows


_SVG_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f")


def _polyline(xs, ys, color, width, dash="") -> str:
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
            f'{dash_attr} points="{points}" />')


def _panel(title, series, x0, width, height) -> list[str]:
    # series: list of (label, values, color, dash); shared x axis = epoch.
    pad = 34.0
    plot_w, plot_h = width - 2 * pad, height - 2 * pad
    all_vals = [v for _, values, _, _ in series for v in values]
    lo, hi = min(all_vals), max(all_vals)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    epochs = max(len(values) for _, values, _, _ in series)

    def sx(e):
        return x0 + pad + (plot_w * (e / max(epochs - 1, 1)))

    def sy(v):
        return pad + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<rect x="{x0 + pad:.2f}" y="{pad:.2f}" width="{plot_w:.2f}" '
        f'height="{plot_h:.2f}" fill="none" stroke="#999" />',
        f'<text x="{x0 + width / 2:.2f}" y="{pad - 10:.2f}" text-anchor="middle" '
        f'font-size="12">{escape(title)}</text>',
        f'<text x="{x0 + pad - 4:.2f}" y="{pad + 10:.2f}" text-anchor="end" '
        f'font-size="9">{hi:.3f}</text>',
        f'<text x="{x0 + pad - 4:.2f}" y="{pad + plot_h:.2f}" text-anchor="end" '
        f'font-size="9">{lo:.3f}</text>',
    ]
    for _, values, color, dash in series:
        xs = [sx(e) for e in range(len(values))]
        ys = [sy(v) for v in values]
        parts.append(_polyline(xs, ys, color, 1.2, dash))
    return parts


def _render_curves_svg(report: RunReport) -> str:
    width, height = 860, 300
    panel_w = width / 2
    loss_series = []
    acc_series = []
    for fr in report.folds:
        color = _SVG_COLORS[fr.fold % len(_SVG_COLORS)]
        loss_series.append((f"fold {fr.fold} train",
                            [r.train_loss for r in fr.epochs], color, "3,3"))
        loss_series.append((f"fold {fr.fold} val",
                            [r.val_loss for r in fr.epochs], color, ""))
        acc_series.append((f"fold {fr.fold} train",
                           [r.train_accuracy for r in fr.epochs], color, "3,3"))
        acc_series.append((f"fold {fr.fold} val",
                           [r.val_accuracy for r in fr.epochs], color, ""))
    epochs = len(report.folds[0].epochs)
    mean_val_loss = [float(np.mean([fr.epochs[e].val_loss for fr in report.folds]))
                     for e in range(epochs)]
    mean_val_acc = [float(np.mean([fr.epochs[e].val_accuracy for fr in report.folds]))
                    for e in range(epochs)]
    loss_series.append(("mean val", mean_val_loss, "#000000", ""))
    acc_series.append(("mean val", mean_val_acc, "#000000", ""))

    body = []
    body += _panel("loss (dashed = train)", loss_series, 0, panel_w, height)
    body += _panel("accuracy (dashed = train)", acc_series, panel_w, panel_w, height)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        + "\n".join(body) + "\n</svg>\n"
    )
