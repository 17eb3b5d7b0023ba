"""Text normalization, tokenization, vocabulary construction, and encoding.

Cleaning removes markup, URLs, @-mentions, emoji, and punctuation that is
not internal to a word, optionally lowercasing Latin script while leaving
Devanagari and Tamil text untouched.  Encoding maps tokens to a corpus-built
vocabulary with reserved indices 0 (padding) and 1 (out-of-vocabulary) and
pads or truncates to a fixed length.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "OOV_INDEX",
    "PAD_INDEX",
    "EncodedSequence",
    "PreprocessConfig",
    "Vocabulary",
    "build_vocab",
    "clean",
    "encode",
    "encode_batch",
    "load_emoji_ranges",
    "load_stopwords",
    "preprocess",
    "remove_stopwords",
    "tokenize",
]

PAD_INDEX = 0
OOV_INDEX = 1

_HTML_RE = re.compile(r"<[^>]+>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_KEEP_RE = re.compile(r"#(\w+)")
_HASHTAG_DROP_RE = re.compile(r"#\w+")

# Zero-width codepoints are deleted outright; visible emoji become a space.
_ZERO_WIDTH = {0x200D} | set(range(0xFE00, 0xFE10))


def load_stopwords(path) -> frozenset[str]:
    """Read a stopword file: one token per line, '#' comment lines ignored."""
    tokens = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                tokens.add(line)
    if not tokens:
        raise ConfigurationError(f"stopword file {path} is empty")
    return frozenset(tokens)


def load_emoji_ranges(path) -> tuple[tuple[int, int], ...]:
    """Read inclusive hex codepoint ranges, one 'LO-HI' per line."""
    ranges = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                lo_s, hi_s = line.split("-")
                lo, hi = int(lo_s, 16), int(hi_s, 16)
            except ValueError:
                raise ConfigurationError(
                    f"{path}:{line_no}: expected 'LO-HI' hex range, got {line!r}"
                ) from None
            ranges.append((lo, hi))
    return tuple(ranges)


def _packaged_text(name: str) -> str:
    return resources.files("abusekit.data").joinpath(name).read_text(encoding="utf-8")


def _parse_ranges(text: str) -> tuple[tuple[int, int], ...]:
    ranges = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lo_s, hi_s = line.split("-")
            ranges.append((int(lo_s, 16), int(hi_s, 16)))
    return tuple(ranges)


@dataclass
class PreprocessConfig:
    """Cleaning flags plus the loaded stopword sets and emoji ranges."""

    stopwords: dict[str, frozenset[str]] = field(default_factory=dict)
    emoji_ranges: tuple[tuple[int, int], ...] = ()
    strip_urls: bool = True
    strip_mentions: bool = True
    strip_html: bool = True
    strip_hashmark: bool = True   # False removes the whole hashtag token instead
    lowercase_latin: bool = True

    @classmethod
    def default(cls, **flags) -> "PreprocessConfig":
        """Config backed by the packaged stopword lists and emoji table."""
        stopwords = {
            lang: frozenset(
                t for t in _packaged_text(f"stopwords_{lang}.txt").splitlines()
                if t.strip() and not t.startswith("#")
            )
            for lang in ("en", "hi", "ta")
        }
        ranges = _parse_ranges(_packaged_text("emoji_ranges.txt"))
        return cls(stopwords=stopwords, emoji_ranges=ranges, **flags)

    @classmethod
    def from_files(cls, stopword_paths: dict[str, str], emoji_path=None, **flags):
        stopwords = {lang: load_stopwords(p) for lang, p in stopword_paths.items()}
        if emoji_path is not None:
            ranges = load_emoji_ranges(emoji_path)
        else:
            ranges = _parse_ranges(_packaged_text("emoji_ranges.txt"))
        return cls(stopwords=stopwords, emoji_ranges=ranges, **flags)

    def to_dict(self) -> dict:
        return {
            "stopwords": {lang: sorted(words) for lang, words in self.stopwords.items()},
            "emoji_ranges": [list(r) for r in self.emoji_ranges],
            "strip_urls": self.strip_urls,
            "strip_mentions": self.strip_mentions,
            "strip_html": self.strip_html,
            "strip_hashmark": self.strip_hashmark,
            "lowercase_latin": self.lowercase_latin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessConfig":
        return cls(
            stopwords={k: frozenset(v) for k, v in data["stopwords"].items()},
            emoji_ranges=tuple((lo, hi) for lo, hi in data["emoji_ranges"]),
            strip_urls=data["strip_urls"],
            strip_mentions=data["strip_mentions"],
            strip_html=data["strip_html"],
            strip_hashmark=data["strip_hashmark"],
            lowercase_latin=data["lowercase_latin"],
        )


def _is_word_char(ch: str) -> bool:
    # Letters, combining marks (Devanagari matras etc.), and digits count
    # as word-internal; everything else is a boundary.
    return unicodedata.category(ch)[0] in ("L", "M", "N")


def _in_ranges(cp: int, ranges) -> bool:
    for lo, hi in ranges:
        if lo <= cp <= hi:
            return True
    return False


def _strip_emoji(text: str, ranges) -> str:
    if not ranges:
        return text
    out = []
    for ch in text:
        cp = ord(ch)
        if _in_ranges(cp, ranges):
            if cp not in _ZERO_WIDTH:
                out.append(" ")
            continue
        out.append(ch)
    return "".join(out)


def _strip_symbols(text: str) -> str:
    # Punctuation/symbols survive only when flanked by word characters on
    # both sides ("don't" keeps its apostrophe; a trailing comma does not).
    out = []
    n = len(text)
    for i, ch in enumerate(text):
        if unicodedata.category(ch)[0] in ("P", "S"):
            prev_word = i > 0 and _is_word_char(text[i - 1])
            next_word = i + 1 < n and _is_word_char(text[i + 1])
            if not (prev_word and next_word):
                out.append(" ")
                continue
        out.append(ch)
    return "".join(out)


def _lowercase_latin(text: str) -> str:
    # Latin blocks only (Basic through Extended-B); leaves other cased
    # scripts alone and is a no-op for Devanagari/Tamil.
    return "".join(ch.lower() if ch.isupper() and ord(ch) < 0x250 else ch for ch in text)


def clean(text: str, config: PreprocessConfig) -> str:
    """Normalize one post. Idempotent; empty output is valid."""
    s = text
    if config.strip_html:
        s = _HTML_RE.sub(" ", s)
    if config.strip_urls:
        s = _URL_RE.sub(" ", s)
    if config.strip_mentions:
        s = _MENTION_RE.sub(" ", s)
    if config.strip_hashmark:
        s = _HASHTAG_KEEP_RE.sub(r"\1", s)
    else:
        s = _HASHTAG_DROP_RE.sub(" ", s)
    s = _strip_emoji(s, config.emoji_ranges)
    s = _strip_symbols(s)
    if config.lowercase_latin:
        s = _lowercase_latin(s)
    return " ".join(s.split())


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace, dropping tokens that are pure punctuation."""
    tokens = []
    for token in text.split():
        if all(unicodedata.category(ch)[0] in ("P", "S") for ch in token):
            continue
        tokens.append(token)
    return tokens


def remove_stopwords(tokens: list[str], language: str, config: PreprocessConfig) -> list[str]:
    """Order-preserving stopword filter for the given language."""
    stopwords = config.stopwords.get(language)
    if stopwords is None:
        raise ConfigurationError(f"no stopword list configured for language {language!r}")
    return [t for t in tokens if t not in stopwords]


def preprocess(text: str, language: str, config: PreprocessConfig) -> list[str]:
    """clean -> tokenize -> remove_stopwords."""
    return remove_stopwords(tokenize(clean(text, config)), language, config)


@dataclass
class Vocabulary:
    """Token-to-index map with reserved indices 0 (PAD) and 1 (OOV).

    Real tokens occupy dense indices starting at 2, ordered by descending
    corpus frequency with lexicographic tie-breaks, so construction is
    deterministic for a given corpus.
    """

    token_to_index: dict[str, int]
    min_frequency: int = 1

    def __len__(self) -> int:
        return len(self.token_to_index) + 2

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index_of(self, token: str) -> int:
        return self.token_to_index.get(token, OOV_INDEX)

    def tokens(self) -> list[str]:
        """Real tokens in index order (index 2 first)."""
        return sorted(self.token_to_index, key=self.token_to_index.__getitem__)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for token in self.tokens():
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                token = line.rstrip("\n")
                if token:
                    mapping[token] = i + 2
        return cls(token_to_index=mapping)


def build_vocab(corpus: list[list[str]], min_frequency: int = 1) -> Vocabulary:
    """Build a vocabulary from tokenized training documents only."""
    if not corpus:
        raise ConfigurationError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_frequency),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(
        token_to_index={t: i + 2 for i, t in enumerate(kept)},
        min_frequency=min_frequency,
    )


@dataclass
class EncodedSequence:
    """Fixed-length index array; positions >= true_length hold PAD."""

    indices: np.ndarray
    true_length: int


def encode(tokens: list[str], vocab: Vocabulary, max_len: int = 100) -> EncodedSequence:
    """Map tokens to indices, truncating to the first max_len and post-padding."""
    kept = tokens[:max_len]
    indices = np.full(max_len, PAD_INDEX, dtype=np.int32)
    for i, token in enumerate(kept):
        indices[i] = vocab.index_of(token)
    return EncodedSequence(indices=indices, true_length=len(kept))


def encode_batch(corpus: list[list[str]], vocab: Vocabulary, max_len: int = 100) -> np.ndarray:
    """Encode many documents into one (N, max_len) int32 matrix."""
    out = np.full((len(corpus), max_len), PAD_INDEX, dtype=np.int32)
    for row, tokens in enumerate(corpus):
        for i, token in enumerate(tokens[:max_len]):
            out[row, i] = vocab.index_of(token)
    return out
