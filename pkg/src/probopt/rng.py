import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of a run seed.

    Streams are keyed by (seed, crc32(name)), so adding a new consumer never
    shifts the draws seen by existing ones.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
