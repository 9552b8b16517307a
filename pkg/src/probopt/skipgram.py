"""Tiny full-softmax skip-gram trainer used as a CE search objective.

Scores are the mean held-out log-probability of a context word given its
centre word, averaged over (centre, context) prediction pairs. The last 20%
of the min-count-filtered word sequence is held out; training uses the rest
after frequent-word subsampling.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cehpo import HyperTuple
from .corpus import Corpus
from .errors import CorpusTooSmall, VocabEmpty

HOLDOUT_FRACTION = 0.2
EPOCHS = 40
LEARNING_RATE = 1.0


def build_vocab(words: Sequence[str], min_count: int) -> dict[str, int]:
    """Word -> id for words seen at least ``min_count`` times, most frequent first."""
    counts = Counter(words)
    kept = sorted((w for w, n in counts.items() if n >= min_count), key=lambda w: (-counts[w], w))
    return {w: i for i, w in enumerate(kept)}


def discard_probability(rel_freq: np.ndarray, s_f: float) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.sqrt(s_f / rel_freq))


def subsample(ids: np.ndarray, s_f: float, rng: np.random.Generator) -> np.ndarray:
    if len(ids) == 0:
        return ids
    counts = np.bincount(ids)
    rel = counts[ids] / len(ids)
    keep = rng.random(len(ids)) >= discard_probability(rel, s_f)
    return ids[keep]


def context_pairs(ids: np.ndarray, c: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    n = len(ids)
    for j in range(-c, c + 1):
        if j == 0 or abs(j) >= n:
            continue
        lo, hi = max(0, -j), min(n, n - j)
        centers.append(ids[lo:hi])
        contexts.append(ids[lo + j : hi + j])
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def log_likelihood(W_in, W_out, centers, contexts) -> float:
    """Mean log p(context | centre) over the given pairs."""
    if len(centers) == 0:
        return 0.0
    logp = _log_softmax(W_in[centers] @ W_out.T)
    return float(logp[np.arange(len(centers)), contexts].mean())


def log_likelihood_grad(W_in, W_out, centers, contexts):
    """(objective, d/dW_in, d/dW_out) of :func:`log_likelihood`."""
    P = len(centers)
    h = W_in[centers]
    logp = _log_softmax(h @ W_out.T)
    ll = float(logp[np.arange(P), contexts].mean())
    g = -np.exp(logp)
    g[np.arange(P), contexts] += 1.0
    g /= P
    g_out = g.T @ h
    g_in = np.zeros_like(W_in)
    np.add.at(g_in, centers, g @ W_out)
    return ll, g_in, g_out


@dataclass
class SkipGramModel:
    vocab: dict[str, int]
    W_in: np.ndarray
    W_out: np.ndarray


def init_model(vocab: dict[str, int], d: int, rng: np.random.Generator) -> SkipGramModel:
    V = len(vocab)
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d))
    return SkipGramModel(vocab, W_in, np.zeros((V, d)))


def split_holdout(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_hold = max(2, math.ceil(HOLDOUT_FRACTION * len(ids)))
    return ids[: len(ids) - n_hold], ids[len(ids) - n_hold :]


def skipgram_eval(
    corpus: Corpus | Sequence[str],
    tup: HyperTuple,
    seed: int = 0,
    epochs: int = EPOCHS,
    lr: float = LEARNING_RATE,
) -> float:
    words = corpus.raw_words() if isinstance(corpus, Corpus) else list(corpus)
    if tup.d < 1:
        raise ValueError("embedding dimension must be >= 1")
    vocab = build_vocab(words, tup.m_c)
    if not vocab:
        raise VocabEmpty(f"no word occurs at least {tup.m_c} times")
    ids = np.array([vocab[w] for w in words if w in vocab], dtype=np.int64)
    if len(ids) < 2 * tup.c + 1:
        raise CorpusTooSmall(f"{len(ids)} words after filtering; need {2 * tup.c + 1}")
    train, held = split_holdout(ids)
    if len(train) < 2:
        raise CorpusTooSmall("nothing left to train on after the holdout split")

    rng = np.random.default_rng(seed)
    model = init_model(vocab, tup.d, rng)
    centers, contexts = context_pairs(subsample(train, tup.s_f, rng), tup.c)
    if len(centers):
        for _ in range(epochs):
            _, g_in, g_out = log_likelihood_grad(model.W_in, model.W_out, centers, contexts)
            model.W_in += lr * g_in
            model.W_out += lr * g_out
    hc, hx = context_pairs(held, tup.c)
    return log_likelihood(model.W_in, model.W_out, hc, hx)


def make_objective(corpus: Corpus | Sequence[str], epochs: int = EPOCHS, lr: float = LEARNING_RATE):
    """Objective ``(tuple, seed) -> F`` for :func:`probopt.cehpo.run_cehpo`.

    Tuples whose ``m_c`` empties the vocabulary or leaves too few words score
    ``-inf`` so they never enter the elite set.
    """

    def objective(tup: HyperTuple, seed: int) -> float:
        try:
            return skipgram_eval(corpus, tup, seed, epochs=epochs, lr=lr)
        except (VocabEmpty, CorpusTooSmall):
            return -math.inf

    return objective
