"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which builds a
``numpy.random.Generator`` on the PCG64 bit generator (PCG XSL-RR 128/64)
seeded by ``numpy.random.SeedSequence(seed, spawn_key=(tag, *keys))``.

The tag names what the stream is used for, so two uses of the same integer
seed (say, a channel realization and the noise applied to it) never share
draws. Given the numpy version, output is a pure function of
``(seed, tag, keys)``.
"""

import numpy as np

CHANNEL = 1
NOISE = 2
BITS = 3
PILOT = 4
INIT = 5
BATCH = 6
CHOICE = 7
WINDOW = 8


def stream(seed, tag, *keys):
    """Return an independent generator for ``(seed, tag, *keys)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag),) + tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
