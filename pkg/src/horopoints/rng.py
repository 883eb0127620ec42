"""Seeded random streams.

Every stochastic routine draws from Philox (a 64-bit counter-based generator)
keyed by SeedSequence([seed, *key]). Parallel work is split into a fixed number
of substreams (seed, worker) so results do not depend on the thread count.
"""
import numpy as np

GENERATOR = "philox4x64"


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def worker_rng(seed: int, worker: int) -> np.random.Generator:
    return stream(seed, worker)
