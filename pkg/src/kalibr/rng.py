"""Seeded random number generation.

Everything stochastic in the library draws from numpy's Philox bit
generator. Philox is counter based: the stream for a given seed is fixed
across operating systems and word sizes, which is what makes seeded
artifacts byte-for-byte reproducible.
"""

from __future__ import annotations

import numpy as np


def philox_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator over Philox 4x64 for ``seed``.

    ``stream`` selects statistically independent substreams of the same
    seed (used when one run needs separate noise for data synthesis and
    for chain proposals).
    """
    if stream == 0:
        seq = np.random.SeedSequence(int(seed))
    else:
        seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(seq))
