"""Reproducible random streams.

Every Monte Carlo trajectory owns a private counter-based generator derived
from the experiment master seed and the trajectory's integer address.  The
splitting rule is::

    Generator(Philox(SeedSequence(master_seed, spawn_key=stream_key)))

where ``stream_key`` is a tuple of small nonnegative integers (typically
``(schedule_point_index, trajectory_index)``).  Streams never depend on
worker count or scheduling order, so parallel runs reproduce serial runs
bit for bit.
"""

from __future__ import annotations

import numpy as np


def stream_generator(master_seed: int, *stream_key: int) -> np.random.Generator:
    """Independent generator for one trajectory / one sampling task."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(stream_key))
    return np.random.Generator(np.random.Philox(ss))


def stream_seed64(master_seed: int, *stream_key: int) -> int:
    """64-bit integer seed for kernels that keep their own RNG state
    (the lattice simulator seeds its internal generator with this)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(stream_key))
    lo, hi = ss.generate_state(2, dtype=np.uint64)[:2]
    # one word is enough entropy here; combine both anyway
    return int(lo ^ (hi >> 1))
