"""Named child random streams fanned out from one root seed."""

import zlib

import numpy as np


def stream(seed, name, *index):
    """Return a Generator for ``name`` (plus optional integer indices) under ``seed``.

    The same (seed, name, index) always yields the same stream, and streams
    for different names are statistically independent.
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(i) for i in index)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
