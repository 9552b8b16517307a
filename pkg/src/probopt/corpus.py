"""Corpus ingestion and the static substring-occurrence table.

Words are whitespace-split and terminated with an end-of-word mark, so a
token can never straddle two words. ``CountTable`` holds, for every substring
lying inside a marked word, its total number of (overlapping) occurrences
across all word occurrences. Tokenizer step costs read from it, which keeps
them static.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyCorpus, EowMarkCollision, InvalidEncoding, TokenNotInTable

DEFAULT_EOW = "_"


@dataclass(frozen=True)
class Corpus:
    words: tuple[str, ...]
    eow_mark: str = DEFAULT_EOW

    @property
    def char_seq(self) -> str:
        return "".join(self.words)

    @property
    def word_count(self) -> int:
        return len(self.words)

    @property
    def total_chars(self) -> int:
        return sum(len(w) for w in self.words)

    def word_bounds(self) -> list[tuple[int, int]]:
        """(start, end) of each marked word inside ``char_seq``."""
        bounds, pos = [], 0
        for w in self.words:
            bounds.append((pos, pos + len(w)))
            pos += len(w)
        return bounds

    def raw_words(self) -> list[str]:
        """Words with the end-of-word mark stripped."""
        return [w[:-1] for w in self.words]


@dataclass(frozen=True)
class CountTable:
    counts: dict[str, int]
    total_chars: int

    def __getitem__(self, token: str) -> int:
        return self.counts.get(token, 0)

    def __contains__(self, token: str) -> bool:
        return token in self.counts


@dataclass(frozen=True)
class VocabStats:
    unique_tokens: dict[str, int] = field(default_factory=dict)
    n_total: int = 0

    @property
    def u(self) -> int:
        return len(self.unique_tokens)


def load_corpus(text: str | bytes, eow_mark: str = DEFAULT_EOW) -> Corpus:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(str(exc)) from exc
    if len(eow_mark) != 1:
        raise ValueError("eow_mark must be a single character")
    if eow_mark in text:
        raise EowMarkCollision(f"end-of-word mark {eow_mark!r} occurs in the input text")
    return Corpus(tuple(w + eow_mark for w in text.split()), eow_mark)


def read_corpus(path, eow_mark: str = DEFAULT_EOW) -> Corpus:
    with open(path, "rb") as fh:
        return load_corpus(fh.read(), eow_mark)


def build_count_table(corpus: Corpus) -> CountTable:
    if corpus.word_count == 0:
        raise EmptyCorpus("cannot build a count table for an empty corpus")
    counts: Counter[str] = Counter()
    for word, freq in Counter(corpus.words).items():
        n = len(word)
        for i in range(n):
            for j in range(i + 1, n + 1):
                counts[word[i:j]] += freq
    return CountTable(dict(counts), corpus.total_chars)


def vocab_stats(tokens: Iterable[str], table: CountTable) -> VocabStats:
    """Unique tokens of a segmentation with their table appearance counts.

    ``tokens`` is the segmentation's token strings (a ``Segmentation`` works
    too, since iterating one yields its strings).
    """
    unique: dict[str, int] = {}
    for tok in tokens:
        if tok in unique:
            continue
        if tok not in table:
            raise TokenNotInTable(f"token {tok!r} has no count table entry")
        unique[tok] = table[tok]
    return VocabStats(unique, sum(unique.values()))


def scan_count(words: Sequence[str], token: str) -> int:
    """Brute-force overlapping occurrence count of ``token`` within words."""
    n = len(token)
    return sum(1 for w in words for i in range(len(w) - n + 1) if w[i : i + n] == token)
