"""Subword vocabulary learning: classic BPE, appearance-greedy BPE (eBPE) and
the optimal exactly-k segmentation (SWE).

All three share one cost model: a token with ``a`` appearances in the static
count table costs ``1 / (a + 1)`` and a segmentation costs the sum of its
token costs. Costs are kept as exact rationals so optimality can be checked
with ``==`` against brute force.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

from .corpus import Corpus, CountTable, build_count_table, load_corpus, vocab_stats
from .errors import InfeasibleK, TooLarge

BRUTEFORCE_MAX_CHARS = 30


@dataclass(frozen=True)
class Segmentation:
    text: str
    spans: tuple[tuple[int, int], ...]
    path_cost: Fraction

    @property
    def k(self) -> int:
        return len(self.spans)

    @property
    def tokens(self) -> list[str]:
        return [self.text[a:b] for a, b in self.spans]

    def boundaries(self) -> tuple[int, ...]:
        return tuple(b for _, b in self.spans[:-1])

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)


@dataclass(frozen=True)
class MergeList:
    merges: tuple[tuple[str, str, str], ...]
    final_k: int

    def pairs(self) -> list[tuple[str, str]]:
        return [(a, b) for a, b, _ in self.merges]


def step_cost(table: CountTable, token: str) -> Fraction:
    if not token:
        raise ValueError("token must be non-empty")
    return Fraction(1, table[token] + 1)


def path_cost(seg: Segmentation | Sequence[str], table: CountTable) -> Fraction:
    return sum((step_cost(table, t) for t in seg), Fraction(0))


def _check_k(corpus: Corpus, k: int) -> None:
    if not corpus.word_count <= k <= corpus.total_chars:
        raise InfeasibleK(
            f"k={k} outside feasible range [{corpus.word_count}, {corpus.total_chars}]"
        )


def _make_segmentation(corpus: Corpus, ends: Sequence[int], table: CountTable) -> Segmentation:
    text = corpus.char_seq
    starts = [0, *ends[:-1]]
    spans = tuple(zip(starts, ends))
    return Segmentation(text, spans, path_cost([text[a:b] for a, b in spans], table))


def check_segmentation(seg: Segmentation, corpus: Corpus) -> None:
    """Raise AssertionError unless ``seg`` covers the corpus without crossing words."""
    text = corpus.char_seq
    assert seg.text == text
    pos = 0
    for a, b in seg.spans:
        assert a == pos and b > a, f"span {(a, b)} does not continue at {pos}"
        pos = b
    assert pos == len(text), "segmentation does not cover the corpus"
    word_ends = {end for _, end in corpus.word_bounds()}
    ends = {b for _, b in seg.spans}
    assert word_ends <= ends, "a span crosses a word boundary"
    for tok in seg.tokens:
        assert corpus.eow_mark not in tok[:-1], f"token {tok!r} contains an inner end-of-word mark"
    assert seg.k >= corpus.word_count


def swe_optimal(corpus: Corpus, table: CountTable, k: int) -> Segmentation:
    """Minimum-cost segmentation into exactly ``k`` within-word tokens.

    Layered shortest path: ``best[pos][r]`` is the cheapest way to cover
    ``char_seq[pos:]`` with ``r`` tokens. Reconstruction walks forward taking
    the earliest feasible boundary, which yields the lexicographically
    smallest boundary vector among optimal segmentations.
    """
    _check_k(corpus, k)
    text = corpus.char_seq
    n = len(text)
    word_end = [0] * n
    words_left = [0] * (n + 1)
    bounds = corpus.word_bounds()
    for idx, (a, b) in enumerate(bounds):
        for p in range(a, b):
            word_end[p] = b
            words_left[p] = len(bounds) - idx

    # integer costs scaled by a common denominator keep sums exact and fast
    denom = math.lcm(*{c + 1 for c in table.counts.values()})
    costs = [
        [denom // (table[text[p:e]] + 1) for e in range(p + 1, word_end[p] + 1)]
        for p in range(n)
    ]

    # best[p] maps r -> cost, for r in [words_left[p], min(k, n - p)]
    best: list[dict[int, int]] = [dict() for _ in range(n + 1)]
    best[n][0] = 0
    for p in range(n - 1, -1, -1):
        row = best[p]
        lo, hi = words_left[p], min(k, n - p)
        for r in range(lo, hi + 1):
            cur = None
            for off, c in enumerate(costs[p]):
                tail = best[p + off + 1].get(r - 1)
                if tail is not None and (cur is None or c + tail < cur):
                    cur = c + tail
            if cur is not None:
                row[r] = cur

    ends, p, r = [], 0, k
    while p < n:
        target = best[p][r]
        for off, c in enumerate(costs[p]):
            tail = best[p + off + 1].get(r - 1)
            if tail is not None and c + tail == target:
                p, r = p + off + 1, r - 1
                ends.append(p)
                break
    seg = _make_segmentation(corpus, ends, table)
    assert seg.path_cost == Fraction(best[0][k], denom)
    return seg


def swe_bruteforce(corpus: Corpus, table: CountTable, k: int) -> Segmentation:
    """Exhaustive oracle for :func:`swe_optimal` on tiny corpora."""
    if corpus.total_chars > BRUTEFORCE_MAX_CHARS:
        raise TooLarge(f"brute force limited to {BRUTEFORCE_MAX_CHARS} characters")
    _check_k(corpus, k)
    text = corpus.char_seq
    word_ends = [b for _, b in corpus.word_bounds()]
    fixed = set(word_ends)
    optional = [p for p in range(1, len(text)) if p not in fixed]
    best_cost, best_ends = None, None
    # combinations() yields subsets in lexicographic order, so strict < keeps
    # the smallest boundary vector among ties
    for chosen in itertools.combinations(optional, k - len(word_ends)):
        ends = sorted(fixed.union(chosen))
        starts = [0, *ends[:-1]]
        cost = sum((step_cost(table, text[a:b]) for a, b in zip(starts, ends)), Fraction(0))
        if best_cost is None or cost < best_cost:
            best_cost, best_ends = cost, ends
    return _make_segmentation(corpus, best_ends, table)


def _merge_word(tokens: list[str], left: str, right: str) -> list[str]:
    out, i = [], 0
    while i < len(tokens):
        if i + 1 < len(tokens) and tokens[i] == left and tokens[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def _greedy_merge(corpus: Corpus, table: CountTable, k: int, by_appearance: bool):
    _check_k(corpus, k)
    freq = Counter(corpus.words)
    state = {w: list(w) for w in freq}
    n_tokens = corpus.total_chars
    merges = []
    while n_tokens > k:
        pair_freq: Counter[tuple[str, str]] = Counter()
        for w, toks in state.items():
            for a, b in zip(toks, toks[1:]):
                pair_freq[a, b] += freq[w]
        if by_appearance:
            score = {p: table[p[0] + p[1]] for p in pair_freq}
        else:
            score = pair_freq
        # highest score, then smallest merged string, then smallest pair
        left, right = min(score, key=lambda p: (-score[p], p[0] + p[1], p))
        for w in state:
            before = len(state[w])
            state[w] = _merge_word(state[w], left, right)
            n_tokens -= (before - len(state[w])) * freq[w]
        merges.append((left, right, left + right))

    tokens = [t for w in corpus.words for t in state[w]]
    ends = list(itertools.accumulate(len(t) for t in tokens))
    seg = _make_segmentation(corpus, ends, table)
    return seg, MergeList(tuple(merges), seg.k)


def ebpe_train(corpus: Corpus, table: CountTable, k: int) -> tuple[Segmentation, MergeList]:
    """Greedy merging by the table count of the merged string."""
    return _greedy_merge(corpus, table, k, by_appearance=True)


def bpe_train(
    corpus: Corpus, k: int, table: CountTable | None = None
) -> tuple[Segmentation, MergeList]:
    """Classic BPE: merge the most frequent adjacent pair of current tokens.

    ``table`` only prices the resulting segmentation; it does not steer merges.
    """
    if table is None:
        table = build_count_table(corpus)
    return _greedy_merge(corpus, table, k, by_appearance=False)


def tokenize(
    text: str, merges: MergeList | Sequence[tuple[str, str]], eow_mark: str = "_"
) -> list[str]:
    pairs = merges.pairs() if isinstance(merges, MergeList) else [tuple(m[:2]) for m in merges]
    corpus = load_corpus(text, eow_mark)
    cache: dict[str, list[str]] = {}
    out = []
    for w in corpus.words:
        if w not in cache:
            toks = list(w)
            for left, right in pairs:
                toks = _merge_word(toks, left, right)
            cache[w] = toks
        out.extend(cache[w])
    return out


# vocabulary / merge files -------------------------------------------------


def vocab_rows(seg: Segmentation, table: CountTable) -> list[tuple[str, int, int]]:
    """(token, count, rank) rows; rank 1 is the most frequent token."""
    stats = vocab_stats(seg, table)
    ordered = sorted(stats.unique_tokens.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(tok, cnt, rank) for rank, (tok, cnt) in enumerate(ordered, start=1)]


def write_vocab(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, cnt, rank in rows:
            fh.write(f"{tok}\t{cnt}\t{rank}\n")


def read_vocab(path) -> list[tuple[str, int, int]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            tok, cnt, rank = line.split("\t")
            rows.append((tok, int(cnt), int(rank)))
    return rows


def write_merges(path, merges: MergeList) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for left, right, _ in merges.merges:
            fh.write(f"{left}\t{right}\n")


def read_merges(path) -> list[tuple[str, str]]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            left, right = line.split("\t")
            pairs.append((left, right))
    return pairs
