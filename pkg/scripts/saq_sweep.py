"""Decode error and cache memory of staircase schedules versus full precision."""

import argparse

import numpy as np

from probopt.saq import SAQParams, run_decode

SCHEDULES = [(16, 16), (16, 8), (16, 8, 4), (16, 8, 4, 2), (16, 4, 2), (16, 2)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=256)
    ap.add_argument("--prompt", type=int, default=64)
    ap.add_argument("--segment-size", type=int, default=16)
    ap.add_argument("--group-size", type=int, default=16)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    print(f"{'schedule':<16} {'mean_err':>10} {'final_rel':>10} {'memory/fp':>10}")
    for sched in SCHEDULES:
        p = SAQParams(args.segment_size, args.group_size, args.dim, sched)
        runs = [run_decode(p, args.prompt, args.steps, s) for s in range(args.seeds)]
        mean_err = np.mean([r["mean_abs_error"] for rows in runs for r in rows])
        final_rel = np.mean([rows[-1]["rel_error"] for rows in runs])
        ratio = runs[0][-1]["footprint_bits"] / runs[0][-1]["fp_bits"]
        print(f"{str(sched):<16} {mean_err:>10.2e} {final_rel:>10.2e} {ratio:>10.3f}")


if __name__ == "__main__":
    main()
