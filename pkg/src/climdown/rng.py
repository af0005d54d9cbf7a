"""Seeded random streams and the project-wide Gaussian sampler.

Every stochastic operation in the package draws from a named substream so
that runs are reproducible and resumable: stream identity depends only on
the integer key path, never on call order elsewhere in the program.
"""

import numpy as np

# Domain tags keep substreams of different subsystems disjoint even when
# they share the same user seed.
TAG_DATA = 101
TAG_TOPO = 102
TAG_TRAIN = 103
TAG_SAMPLE = 104
TAG_INIT = 105


def substream(*keys: int) -> np.random.Generator:
    """Independent generator for an integer key path, e.g. (seed, tag, i)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(keys))))


def normal(rng: np.random.Generator, shape, dtype=np.float32) -> np.ndarray:
    """Standard normal samples via the Box-Muller transform.

    Box-Muller is fixed project-wide (instead of the generator's native
    ziggurat) so that seeded outputs depend only on the uniform bit stream.
    """
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    # rng.random() is in [0, 1); flip to (0, 1] so the log is finite
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return z.reshape(shape).astype(dtype)
