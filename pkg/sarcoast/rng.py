"""Seeded random streams.

All randomness goes through numpy's Philox4x64-10 counter-based bit
generator. The 64-bit user seed and a stream path (for example a sample
index) are hashed by numpy.random.SeedSequence into the Philox key, so a
stream depends only on (seed, *path) and never on call order or thread
scheduling. Reimplementations can match draws by reproducing SeedSequence
and Philox, both of which are documented numpy algorithms.
"""
import numpy as np

STREAM_SCENE = 1
STREAM_ORACLE = 2
STREAM_AUGMENT = 3


def make_rng(seed, *path):
    """Return a Generator for the stream identified by (seed, *path)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
