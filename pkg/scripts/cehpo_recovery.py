"""How often the CE search finds a planted optimum, by grid size.

With M=100 and rho=0.01 the elite set is a single tuple and only 10 of the
100 samples per round are resampled from it, so the search behaves close to
random search with early stopping. Recovery falls as the grid grows.
"""

import argparse
import itertools

from probopt.cehpo import CEConfig, PlantedObjective, Ranges, run_cehpo

GRIDS = {
    "81": Ranges(c=(1, 3), d=(8, 10), m_c=(1, 3)),
    "192": Ranges(c=(1, 4), d=(8, 11), m_c=(1, 4)),
    "500": Ranges(c=(1, 5), d=(7, 12), m_c=(1, 5)),
    "1125": Ranges(),
}


def recovery(ranges: Ranges, seeds: int) -> tuple[int, int]:
    cells = list(itertools.product(
        range(ranges.c[0], ranges.c[1] + 1), range(ranges.d[0], ranges.d[1] + 1),
        range(3), range(ranges.m_c[0], ranges.m_c[1] + 1),
    ))
    hits = 0
    for seed in range(seeds):
        obj = PlantedObjective(ranges, cells[(seed * 37) % len(cells)])
        best, _ = run_cehpo(obj, ranges, CEConfig(seed=seed))
        hits += obj.cell(best) == obj.optimum
    return len(cells), hits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    args = ap.parse_args()
    print(f"{'grid':>6} {'recovered':>10}")
    for ranges in GRIDS.values():
        size, hits = recovery(ranges, args.seeds)
        print(f"{size:>6} {hits:>6}/{args.seeds}")


if __name__ == "__main__":
    main()
