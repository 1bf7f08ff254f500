"""Deterministic random substreams.

Every stochastic component draws from a ``numpy`` Generator built on the
counter-based Philox bit generator. Substreams are addressed by a tuple of
non-negative integers (for example ``(chain_index,)`` or
``(chain_index, purpose)``) and derived from the run seed with
``numpy.random.SeedSequence(seed, spawn_key=keys)``. Two different key tuples
give statistically independent streams, and the same ``(seed, keys)`` always
gives the same stream regardless of how many other streams exist or which
thread consumes them.
"""
import numpy as np

# Named purposes, so call sites do not invent ad-hoc integers.
PURPOSE_CHAIN = 0
PURPOSE_INIT = 1
PURPOSE_TEST = 2


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for substream ``keys`` of run ``seed``."""
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seed and keys must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
