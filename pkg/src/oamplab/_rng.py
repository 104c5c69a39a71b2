"""Reproducible random streams.

Every Monte-Carlo task draws from its own Philox (counter-based) generator
keyed by ``(master_seed, trial_index, module_tag)`` so that results do not
depend on scheduling or on how many workers run in parallel.
"""
import zlib

import numpy as np


def _tag_key(tag):
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(seed, *keys):
    """Return an independent generator for ``(seed, *keys)``.

    Keys may be integers (trial indices) or strings (module tags).
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_tag_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Accept a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
