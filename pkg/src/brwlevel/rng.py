"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from the run seed
plus an arbitrary tuple of integer labels (replica, generation, task id...).
Two streams with different labels are statistically independent and the
draws of one never depend on how many numbers another consumed.
"""
import numpy as np


def stream(seed, *labels):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, *labels)``."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(x) & 0xFFFFFFFFFFFFFFFF for x in labels]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(0)
    return stream(int(rng))
