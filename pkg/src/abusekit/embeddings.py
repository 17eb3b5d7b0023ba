"""Pretrained word-vector files and the frozen embedding matrix.

Handles whitespace-separated text vector files (GloVe style, or FastText
style with a leading "count dim" header), a binary cache for fast reloads,
and construction of a vocabulary-aligned matrix whose PAD and OOV rows stay
zero and which is never updated during training.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, CorruptionError, ParseError
from .text import OOV_INDEX, PAD_INDEX, Vocabulary

__all__ = [
    "EmbeddingTable",
    "WordVectorFile",
    "build_matrix",
    "parse_vector_file",
    "read_cache",
    "write_cache",
    "write_vector_file",
]

log = logging.getLogger(__name__)

_CACHE_MAGIC = b"EMB1"


@dataclass
class WordVectorFile:
    """Parsed vector file: word -> float32 vector, all the same dimension."""

    dimension: int
    entries: dict[str, np.ndarray]
    had_header: bool

    def __len__(self) -> int:
        return len(self.entries)


def _is_header(fields: list[str]) -> bool:
    # FastText convention: first line holds exactly two integer fields.
    if len(fields) != 2:
        return False
    try:
        int(fields[0]), int(fields[1])
    except ValueError:
        return False
    return True


def parse_vector_file(path) -> WordVectorFile:
    """Stream-parse a text vector file, inferring the dimension.

    The dimension is fixed by the first data line and enforced on every
    later line.  Duplicate words keep the last occurrence.
    """
    entries: dict[str, np.ndarray] = {}
    dimension = None
    had_header = False
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.rstrip("\n").split(" ")
            if fields and fields[-1] == "":
                fields = fields[:-1]
            if not fields or fields == [""]:
                continue
            if line_no == 1 and _is_header(fields):
                had_header = True
                continue
            word, raw = fields[0], fields[1:]
            if dimension is None:
                dimension = len(raw)
                if dimension == 0:
                    raise ParseError("no vector components on first data line",
                                     path=str(path), line=line_no)
            elif len(raw) != dimension:
                raise ParseError(
                    f"expected {dimension} components, found {len(raw)}",
                    path=str(path), line=line_no)
            try:
                vec = np.array(raw, dtype=np.float32)
            except ValueError:
                raise ParseError("non-numeric vector component",
                                 path=str(path), line=line_no) from None
            if not np.all(np.isfinite(vec)):
                raise ParseError("non-finite vector component",
                                 path=str(path), line=line_no)
            if word in entries:
                log.warning("duplicate vector for %r at %s:%d; keeping the later one",
                            word, path, line_no)
            entries[word] = vec
    if dimension is None:
        raise ParseError("vector file has no data lines", path=str(path))
    return WordVectorFile(dimension=dimension, entries=entries, had_header=had_header)


def write_vector_file(vectors: WordVectorFile, path, header: bool = False) -> None:
    """Serialize back to the text format.

    Nine significant digits reproduce any float32 exactly on re-parse, so
    text round-trips are lossless, not merely close.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"{len(vectors.entries)} {vectors.dimension}\n")
        for word, vec in vectors.entries.items():
            fh.write(word + " " + " ".join("%.9g" % v for v in vec) + "\n")


def write_cache(vectors: WordVectorFile, path) -> None:
    """Binary cache: 'EMB1', u32 dim, u64 count, then length-prefixed entries."""
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<I", vectors.dimension))
        fh.write(struct.pack("<Q", len(vectors.entries)))
        for word, vec in vectors.entries.items():
            encoded = word.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_cache(path) -> WordVectorFile:
    """Load a cache written by write_cache, validating structure throughout."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise CorruptionError(f"{path}: bad magic {magic!r}, expected {_CACHE_MAGIC!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise CorruptionError(f"{path}: truncated header")
        dimension = struct.unpack("<I", header[:4])[0]
        count = struct.unpack("<Q", header[4:])[0]
        entries: dict[str, np.ndarray] = {}
        vec_bytes = 4 * dimension
        for i in range(count):
            raw_len = fh.read(2)
            if len(raw_len) != 2:
                raise CorruptionError(f"{path}: truncated at entry {i}")
            word_len = struct.unpack("<H", raw_len)[0]
            word_raw = fh.read(word_len)
            if len(word_raw) != word_len:
                raise CorruptionError(f"{path}: truncated word for entry {i}")
            word = word_raw.decode("utf-8")
            raw_vec = fh.read(vec_bytes)
            if len(raw_vec) != vec_bytes:
                raise CorruptionError(f"{path}: truncated vector for entry {i}")
            entries[word] = np.frombuffer(raw_vec, dtype="<f4").copy()
        if fh.read(1):
            raise CorruptionError(f"{path}: trailing bytes after {count} entries")
    return WordVectorFile(dimension=dimension, entries=entries, had_header=False)


@dataclass
class EmbeddingTable:
    """Vocabulary-aligned |V| x dim matrix. Frozen: never receives updates."""

    matrix: np.ndarray
    coverage: float
    trainable: bool = False


def build_matrix(
    vocab: Vocabulary,
    vectors: WordVectorFile,
    expected_dim: int | None = None,
    missing_init: str = "zero",
    seed: int = 0,
) -> EmbeddingTable:
    """Assemble the frozen lookup matrix for a vocabulary.

    Rows 0 (PAD) and 1 (OOV) are always zero.  Tokens absent from the file
    get zero rows by default, or seeded uniform(-0.05, 0.05) rows when
    missing_init="uniform".  Coverage counts only non-reserved tokens.
    """
    if expected_dim is not None and vectors.dimension != expected_dim:
        raise ConfigurationError(
            f"vector file has dimension {vectors.dimension}, model expects {expected_dim}")
    if missing_init not in ("zero", "uniform"):
        raise ConfigurationError(f"unknown missing_init {missing_init!r}")

    tokens = vocab.tokens()
    matrix = np.zeros((len(tokens) + 2, vectors.dimension), dtype=np.float32)
    rng = np.random.default_rng(seed)
    hits = 0
    for token in tokens:
        row = vocab.index_of(token)
        vec = vectors.entries.get(token)
        if vec is not None:
            matrix[row] = vec
            hits += 1
        elif missing_init == "uniform":
            matrix[row] = rng.uniform(-0.05, 0.05, size=vectors.dimension)
    matrix[PAD_INDEX] = 0.0
    matrix[OOV_INDEX] = 0.0
    coverage = hits / len(tokens) if tokens else 0.0
    return EmbeddingTable(matrix=matrix, coverage=coverage, trainable=False)
