"""Path cost of SWE, eBPE and BPE segmentations on a corpus, across k."""

import argparse

import numpy as np

from probopt.corpus import build_count_table, load_corpus, read_corpus
from probopt.tokenizer import bpe_train, ebpe_train, swe_optimal


def synthetic_corpus(seed: int, n_words: int = 60) -> str:
    rng = np.random.default_rng(seed)
    stems = ["low", "new", "wid", "est", "er", "ing"]
    return " ".join("".join(rng.choice(stems, size=int(rng.integers(1, 4)))) for _ in range(n_words))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("corpus", nargs="?", help="UTF-8 text file (default: synthetic)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--points", type=int, default=8)
    args = ap.parse_args()
    corpus = read_corpus(args.corpus) if args.corpus else load_corpus(synthetic_corpus(args.seed))
    table = build_count_table(corpus)
    ks = np.linspace(corpus.word_count, corpus.total_chars, args.points).astype(int)
    print(f"words={corpus.word_count} chars={corpus.total_chars}")
    print(f"{'k':>6} {'swe':>10} {'ebpe':>10} {'bpe':>10}  (ebpe/bpe may stop below k)")
    for k in ks:
        swe = swe_optimal(corpus, table, int(k))
        e, _ = ebpe_train(corpus, table, int(k))
        b, _ = bpe_train(corpus, int(k), table)
        print(f"{k:>6} {float(swe.path_cost):>10.4f} {float(e.path_cost):>7.4f}@{e.k:<4} {float(b.path_cost):>7.4f}@{b.k:<4}")


if __name__ == "__main__":
    main()
