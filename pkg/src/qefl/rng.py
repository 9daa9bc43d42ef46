"""Hierarchical, order-independent random streams.

Every random draw in a run comes from a stream keyed by
``(master_seed, purpose, *indices)``. Streams are built with
:class:`numpy.random.SeedSequence` spawn keys and the PCG64 bit generator,
so the stream a client sees in a given round does not depend on how many
other streams were consumed before it, or on which thread consumed them.

Gaussian draws use ``Generator.standard_normal`` (numpy's ziggurat
transform over PCG64 output), which numpy guarantees to be identical
across platforms for a fixed seed.
"""
from __future__ import annotations

import enum

import numpy as np


class Purpose(enum.IntEnum):
    INIT = 0
    DROPOUT = 1
    MUTATION = 2
    SHUFFLE = 3
    NOISE = 4
    DATA = 5
    SPLIT = 6
    SHARD = 7
    DIAGNOSTIC = 8


def stream(master_seed: int, purpose: Purpose | int, *indices: int) -> np.random.Generator:
    """Return the generator for ``purpose`` at position ``indices`` under ``master_seed``."""
    key = (int(purpose),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
