"""Multi-annotator corpus ingestion, label aggregation, splits, and fold indices.

The primary input is the shared-task CSV layout: each post appears on three
rows (one per label question), with per-annotator vote columns grouped by
language.  Votes aggregate to a binary label by strict majority over the
countable votes, ties resolving to 1 and vote-free rows dropping out.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ConfigurationError,
    DataIntegrityError,
    ParseError,
    SchemaError,
)

__all__ = [
    "ANNOTATOR_COLUMNS",
    "KEY_TO_LABEL",
    "LANGUAGES",
    "MACD_LABEL_MAP",
    "MULTILATE_LABEL_MAP",
    "TASK_KEYS",
    "DatasetSplit",
    "FoldAssignment",
    "LabeledExample",
    "RawAnnotationRow",
    "Vote",
    "aggregate_label",
    "assemble_examples",
    "kfold_indices",
    "load_external",
    "merge_external",
    "parse_uli_csv",
    "read_dataset",
    "split_train_test",
    "write_dataset",
]

LANGUAGES = ("en", "hi", "ta")

_LANGUAGE_ALIASES = {
    "en": "en", "english": "en",
    "hi": "hi", "hindi": "hi",
    "ta": "ta", "tamil": "ta",
}

ANNOTATOR_COLUMNS = {
    "en": tuple(f"en_a{i}" for i in range(1, 7)),
    "hi": tuple(f"hi_a{i}" for i in range(1, 6)),
    "ta": tuple(f"ta_a{i}" for i in range(1, 7)),
}

TASK_KEYS = ("question_1", "question_2", "question_3")

KEY_TO_LABEL = {"question_1": "1", "question_2": "2", "question_3": "3"}

# Raw external-corpus labels mapped onto the label-1 convention (1 = abusive).
# The MACD files annotate 0 for abusive and 1 for non-abusive, so polarity flips.
MACD_LABEL_MAP = {0: 1, 1: 0}
MULTILATE_LABEL_MAP = {"hate": 1, "not-hate": 0}


class Vote(Enum):
    """One annotator's cell for one (post, question) row."""

    AGREE = "agree"
    DISAGREE = "disagree"
    NOT_ANNOTATED = "not_annotated"   # assigned but left blank ("NL")
    NOT_ASSIGNED = "not_assigned"     # post never assigned (empty / NaN cell)

    @classmethod
    def from_cell(cls, cell: str | None) -> "Vote":
        s = (cell or "").strip()
        if s == "" or s.lower() == "nan":
            return cls.NOT_ASSIGNED
        if s.upper() == "NL":
            return cls.NOT_ANNOTATED
        # columns containing NaN get rendered as floats, so accept "1.0"/"0.0"
        try:
            value = float(s)
        except ValueError:
            raise ParseError(f"unrecognized vote cell {cell!r}") from None
        if value == 1.0:
            return cls.AGREE
        if value == 0.0:
            return cls.DISAGREE
        raise ParseError(f"unrecognized vote cell {cell!r}")


@dataclass
class RawAnnotationRow:
    """One CSV record: a post shown for one label question, with its votes."""

    id: int
    text: str
    language: str
    key: str
    votes: list[tuple[str, Vote]]

    def vote_values(self) -> list[Vote]:
        return [v for _, v in self.votes]


@dataclass
class LabeledExample:
    """A post with its aggregated binary label per task key."""

    text: str
    language: str
    labels: dict[str, int]
    source: str = "uli"


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    test: list[LabeledExample]
    seed: int
    ratio: float


@dataclass
class FoldAssignment:
    """Balanced fold membership: ``membership[i]`` is example i's fold in [0, k)."""

    k: int
    membership: np.ndarray

    def val_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.membership == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.membership != fold)


def _normalize_language(raw: str, line: int | None = None, path=None) -> str:
    lang = _LANGUAGE_ALIASES.get((raw or "").strip().lower())
    if lang is None:
        raise ParseError(f"unrecognized language {raw!r}", path=path, line=line)
    return lang


def _normalize_key(raw: str, line: int | None = None, path=None) -> str:
    key = (raw or "").strip().lower().replace(" ", "_")
    if key not in TASK_KEYS:
        raise ParseError(f"unrecognized key {raw!r}", path=path, line=line)
    return key


def parse_uli_csv(path) -> list[RawAnnotationRow]:
    """Parse the shared-task CSV into one row object per record.

    Required columns: id, text, language, key.  Vote cells come from the
    annotator column group matching each row's language; text is preserved
    byte-exact (the csv module handles quoted commas/newlines).
    """
    rows: list[RawAnnotationRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("file is empty", path=path)
        header = {name.strip() for name in reader.fieldnames}
        for required in ("id", "text", "language", "key"):
            if required not in header:
                raise SchemaError(f"missing required column {required!r}", path=path)
        annotator_cols = {
            lang: [c for c in cols if c in header]
            for lang, cols in ANNOTATOR_COLUMNS.items()
        }
        for record in reader:
            line = reader.line_num
            language = _normalize_language(record["language"], line, path)
            key = _normalize_key(record["key"], line, path)
            cols = annotator_cols[language]
            if not cols:
                raise SchemaError(
                    f"missing annotator columns for language {language!r} "
                    f"(expected e.g. {ANNOTATOR_COLUMNS[language][0]!r})",
                    path=path,
                )
            raw_id = (record["id"] or "").strip()
            try:
                row_id = int(float(raw_id)) if raw_id else None
                if row_id is None or float(raw_id) != row_id:
                    raise ValueError
            except ValueError:
                raise ParseError(f"non-integer id {raw_id!r}", path=path, line=line) from None
            try:
                votes = [(c, Vote.from_cell(record.get(c))) for c in cols]
            except ParseError as exc:
                raise ParseError(f"row id {row_id}: {exc}", path=path, line=line) from None
            rows.append(
                RawAnnotationRow(
                    id=row_id,
                    text=record["text"],
                    language=language,
                    key=key,
                    votes=votes,
                )
            )
    return rows


def aggregate_label(votes: list[Vote]) -> int | None:
    """Collapse one row's votes to a binary label.

    Strict majority of AGREE vs DISAGREE wins; equal nonzero counts give 1;
    rows with no countable votes yield None (dropped downstream).
    """
    agree = sum(1 for v in votes if v is Vote.AGREE)
    disagree = sum(1 for v in votes if v is Vote.DISAGREE)
    if agree == 0 and disagree == 0:
        return None
    if agree == disagree:
        return 1
    return 1 if agree > disagree else 0


def assemble_examples(rows: list[RawAnnotationRow], keys) -> list[LabeledExample]:
    """Join the per-question rows of each post into one labeled example.

    Posts missing any requested key's label (no row for that key, or no
    countable votes) are excluded.
    """
    keys = tuple(keys)
    for key in keys:
        if key not in TASK_KEYS:
            raise ConfigurationError(f"unknown task key {key!r}")
    by_id: dict[int, dict[str, RawAnnotationRow]] = {}
    order: list[int] = []
    for row in rows:
        group = by_id.get(row.id)
        if group is None:
            group = by_id[row.id] = {}
            order.append(row.id)
        if row.key in group:
            raise DataIntegrityError(f"duplicate (id, key) pair ({row.id}, {row.key})")
        group[row.key] = row
    examples = []
    for post_id in order:
        group = by_id[post_id]
        labels: dict[str, int] = {}
        complete = True
        for key in keys:
            row = group.get(key)
            label = aggregate_label(row.vote_values()) if row is not None else None
            if label is None:
                complete = False
                break
            labels[KEY_TO_LABEL[key]] = label
        if not complete:
            continue
        first = group[keys[0]]
        examples.append(
            LabeledExample(text=first.text, language=first.language, labels=labels)
        )
    return examples


def load_external(path, source: str, language: str) -> list[LabeledExample]:
    """Load an external corpus CSV (columns: text, label) onto the label-1 convention."""
    source = source.lower()
    if source not in ("macd", "multilate"):
        raise ConfigurationError(f"unknown external source {source!r}")
    language = _normalize_language(language)
    examples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("file is empty", path=path)
        fields = {name.strip().lower(): name for name in reader.fieldnames}
        for required in ("text", "label"):
            if required not in fields:
                raise SchemaError(f"missing required column {required!r}", path=path)
        for index, record in enumerate(reader):
            raw = (record[fields["label"]] or "").strip()
            if source == "macd":
                try:
                    value = int(float(raw))
                    label = MACD_LABEL_MAP[value]
                except (ValueError, KeyError):
                    raise ParseError(
                        f"row {index}: unrecognized label {raw!r}", path=path
                    ) from None
            else:
                try:
                    label = MULTILATE_LABEL_MAP[raw.lower()]
                except KeyError:
                    raise ParseError(
                        f"row {index}: unrecognized label {raw!r}", path=path
                    ) from None
            examples.append(
                LabeledExample(
                    text=record[fields["text"]],
                    language=language,
                    labels={"1": label},
                    source=source,
                )
            )
    return examples


def merge_external(
    base: list[LabeledExample], extra: list[LabeledExample]
) -> list[LabeledExample]:
    """Concatenate base then extra; no deduplication."""
    base_langs = {ex.language for ex in base}
    extra_langs = {ex.language for ex in extra}
    if base_langs and extra_langs and base_langs != extra_langs:
        raise ConfigurationError(
            f"language mismatch: base has {sorted(base_langs)}, "
            f"extra has {sorted(extra_langs)}"
        )
    return list(base) + list(extra)


def split_train_test(
    examples: list[LabeledExample],
    ratio: float = 0.8,
    seed: int = 0,
    stratified: bool = False,
    label_key: str = "1",
) -> DatasetSplit:
    """Shuffle with a seeded RNG and partition into train/test.

    Train size is round(n * ratio), clamped so both sides are non-empty.
    With ``stratified`` the ratio is applied within each label group.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"ratio must be in (0, 1), got {ratio}")
    n = len(examples)
    if n < 2:
        raise ConfigurationError(f"need at least 2 examples to split, got {n}")
    rng = np.random.default_rng(seed)

    def partition(indices: np.ndarray) -> tuple[list[int], list[int]]:
        shuffled = indices[rng.permutation(len(indices))]
        n_train = int(round(len(shuffled) * ratio))
        n_train = min(max(n_train, 1), len(shuffled) - 1) if len(shuffled) > 1 else n_train
        return list(shuffled[:n_train]), list(shuffled[n_train:])

    if stratified:
        groups: dict[int, list[int]] = {}
        for i, ex in enumerate(examples):
            groups.setdefault(ex.labels.get(label_key, -1), []).append(i)
        train_idx: list[int] = []
        test_idx: list[int] = []
        for value in sorted(groups):
            tr, te = partition(np.asarray(groups[value]))
            train_idx.extend(tr)
            test_idx.extend(te)
        train_idx = [train_idx[i] for i in rng.permutation(len(train_idx))]
        test_idx = [test_idx[i] for i in rng.permutation(len(test_idx))]
    else:
        train_idx, test_idx = partition(np.arange(n))

    return DatasetSplit(
        train=[examples[i] for i in train_idx],
        test=[examples[i] for i in test_idx],
        seed=seed,
        ratio=ratio,
    )


def kfold_indices(n: int, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Assign each of n examples to one of k balanced folds, seeded."""
    if n < k:
        raise ConfigurationError(f"cannot make {k} folds from {n} examples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    membership = np.empty(n, dtype=np.int64)
    base, remainder = divmod(n, k)
    start = 0
    for fold in range(k):
        size = base + (1 if fold < remainder else 0)
        membership[perm[start : start + size]] = fold
        start += size
    return FoldAssignment(k=k, membership=membership)


def write_dataset(examples: list[LabeledExample], path) -> None:
    """Write the canonical dataset file: one JSON object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            record = {
                "text": ex.text,
                "language": ex.language,
                "labels": ex.labels,
                "source": ex.source,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_dataset(path) -> list[LabeledExample]:
    """Read a canonical dataset file written by :func:`write_dataset`."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                labels = {str(k): int(v) for k, v in record["labels"].items()}
                example = LabeledExample(
                    text=record["text"],
                    language=_normalize_language(record["language"]),
                    labels=labels,
                    source=record.get("source", "uli"),
                )
            except (KeyError, TypeError, ValueError, ParseError) as exc:
                raise ParseError(f"bad record: {exc}", path=path, line=line_no) from None
            for value in labels.values():
                if value not in (0, 1):
                    raise ParseError(
                        f"label values must be 0/1, got {value}", path=path, line=line_no
                    )
            examples.append(example)
    return examples
