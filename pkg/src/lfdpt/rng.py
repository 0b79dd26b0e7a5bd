"""Named random streams derived from one seed.

``stream(seed, "init")`` and ``stream(seed, "data")`` are independent, so
changing how much randomness one component consumes never shifts another.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))
