"""Attention error and density of probabilistic block masks over (w, s)."""

import argparse

import numpy as np

from probopt.prflash import BlockProbModel, SelectionParams, build_mask, masked_attention
from probopt.rng import substream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--block", type=int, default=32)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    model = BlockProbModel(args.n, args.block, args.block, args.k)
    print(f"{'w':>4} {'s':>4} {'dropped':>8} {'mean_err':>10} {'max_err':>10}")
    for w in (0.0, 0.5, 1.0):
        for s in (10, 30, 50, 70):
            stats = []
            for seed in range(args.seeds):
                rng = substream(seed, "prflash.inputs")
                Q, K, V = (rng.normal(size=(args.n, args.dim)) for _ in range(3))
                _, st = masked_attention(Q, K, V, build_mask(model, SelectionParams(w, s, seed)))
                stats.append((st.dropped_fraction, st.mean_abs_error, st.max_abs_error))
            d, me, mx = np.mean(stats, axis=0)
            print(f"{w:>4} {s:>4} {d:>8.3f} {me:>10.4f} {mx:>10.4f}")


if __name__ == "__main__":
    main()
