import math
from collections import Counter

import numpy as np
import pytest

from probopt.cehpo import HyperTuple
from probopt.corpus import load_corpus
from probopt.errors import CorpusTooSmall, VocabEmpty
from probopt.skipgram import (
    build_vocab,
    context_pairs,
    log_likelihood,
    log_likelihood_grad,
    make_objective,
    skipgram_eval,
)

TOY = (
    "the cat sat on the mat the dog sat on the log a cat and a dog ran "
    "the cat ran to the mat and the dog ran to the log"
).split() * 3


def reference_eval(words, tup, seed, epochs, lr):
    """Loop-by-loop reimplementation of the evaluation pipeline."""
    counts = Counter(words)
    vocab = sorted([w for w in counts if counts[w] >= tup.m_c], key=lambda w: (-counts[w], w))
    index = {w: i for i, w in enumerate(vocab)}
    seq = [index[w] for w in words if w in index]
    n_hold = max(2, math.ceil(0.2 * len(seq)))
    train, held = seq[: len(seq) - n_hold], seq[len(seq) - n_hold :]
    rng = np.random.default_rng(seed)
    V, d = len(vocab), tup.d
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d))
    W_out = np.zeros((V, d))
    draws = rng.random(len(train))
    tc = Counter(train)
    kept = []
    for w, u in zip(train, draws):
        f = tc[w] / len(train)
        if u >= max(0.0, 1 - math.sqrt(tup.s_f / f)):
            kept.append(w)

    def pairs(s):
        out = []
        for j in [j for j in range(-tup.c, tup.c + 1) if j != 0]:
            for t in range(len(s)):
                if 0 <= t + j < len(s):
                    out.append((s[t], s[t + j]))
        return out

    def logp(W_in, W_out, ctr, ctx):
        z = [sum(W_in[ctr, a] * W_out[v, a] for a in range(d)) for v in range(V)]
        m = max(z)
        return z[ctx] - m - math.log(sum(math.exp(x - m) for x in z))

    tp = pairs(kept)
    for _ in range(epochs):
        g_in, g_out = np.zeros_like(W_in), np.zeros_like(W_out)
        for ctr, ctx in tp:
            z = W_out @ W_in[ctr]
            p = np.exp(z - z.max())
            p /= p.sum()
            err = -p
            err[ctx] += 1
            g_out += np.outer(err, W_in[ctr]) / len(tp)
            g_in[ctr] += W_out.T @ err / len(tp)
        W_in += lr * g_in
        W_out += lr * g_out
    hp = pairs(held)
    return sum(logp(W_in, W_out, a, b) for a, b in hp) / len(hp)


# frozen from reference_eval(TOY, HyperTuple(2, 6, 0.05, 2), seed=3, epochs=15, lr=1.0)
REFERENCE_F = -2.396618586601993


def test_matches_reference_reimplementation():
    tup = HyperTuple(2, 6, 0.05, 2)
    ref = reference_eval(TOY, tup, 3, 15, 1.0)
    got = skipgram_eval(TOY, tup, 3, epochs=15, lr=1.0)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert got == pytest.approx(REFERENCE_F, rel=1e-9)


def test_untrained_model_is_uniform():
    words = TOY
    tup = HyperTuple(2, 4, 1.0, 1)
    V = len(set(words))
    assert skipgram_eval(words, tup, 0, epochs=0) == pytest.approx(-math.log(V), abs=1e-12)


def test_predictable_corpus_approaches_zero():
    words = ("a b " * 60).split()
    tup = HyperTuple(1, 4, 1.0, 1)
    fs = [skipgram_eval(words, tup, 0, epochs=e) for e in (0, 10, 40, 160)]
    assert all(f < 0 for f in fs)
    assert fs == sorted(fs)
    assert fs[-1] > -1e-2


def test_accepts_corpus_object_and_is_deterministic():
    c = load_corpus(" ".join(TOY))
    tup = HyperTuple(2, 5, 0.1, 1)
    assert skipgram_eval(c, tup, 4) == skipgram_eval(TOY, tup, 4)
    assert skipgram_eval(c, tup, 4) <= 0


def test_errors():
    with pytest.raises(VocabEmpty):
        skipgram_eval(TOY, HyperTuple(1, 4, 1.0, 1000), 0)
    with pytest.raises(CorpusTooSmall):
        skipgram_eval("a b c".split(), HyperTuple(2, 4, 1.0, 1), 0)
    obj = make_objective(TOY)
    assert obj(HyperTuple(1, 4, 1.0, 1000), 0) == -math.inf


def test_build_vocab_and_pairs():
    v = build_vocab(["b", "a", "b", "c"], 1)
    assert v == {"b": 0, "a": 1, "c": 2}
    assert build_vocab(["b", "a", "b", "c"], 2) == {"b": 0}
    ctr, ctx = context_pairs(np.array([0, 1, 2]), 1)
    assert sorted(zip(ctr.tolist(), ctx.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def finite_difference(f, W, h=1e-6):
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        old = W[idx]
        W[idx] = old + h
        up = f()
        W[idx] = old - h
        down = f()
        W[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def gradient_check_errors(seed):
    rng = np.random.default_rng(seed)
    V = int(rng.integers(2, 21))
    d = int(rng.integers(1, 9))
    P = int(rng.integers(1, 40))
    W_in = rng.normal(size=(V, d))
    W_out = rng.normal(size=(V, d))
    ctr = rng.integers(0, V, size=P)
    ctx = rng.integers(0, V, size=P)
    _, g_in, g_out = log_likelihood_grad(W_in, W_out, ctr, ctx)
    f = lambda: log_likelihood(W_in, W_out, ctr, ctx)
    errs = []
    for analytic, W in ((g_in, W_in), (g_out, W_out)):
        numeric = finite_difference(f, W)
        errs.append(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))
    return max(errs)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    assert gradient_check_errors(seed) <= 1e-4
