#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Deterministic random stream derivation.

A run is driven by one 64-bit seed. Every consumer of randomness gets its own
generator derived from (seed, stream id, index...), so results do not depend
on how the work is partitioned across chunks or worker processes.
"""

import enum

import numpy as np

from utils.errors import ConfigError

MAX_SEED = 2 ** 64 - 1


class Stream(enum.IntEnum):
    """Stream identifiers used as the first derivation key."""
    POINT = 0
    TRAFFIC = 1
    FADING = 2
    PILOT_NOISE = 3
    DATA_NOISE = 4
    AUX_NOISE = 5


def seed_sequence(seed):
    """
    Normalize a seed value to a numpy SeedSequence.

    Args:
        seed: int in [0, 2**64), an existing SeedSequence, or None for fresh entropy.

    Returns:
        np.random.SeedSequence: The root sequence.

    Raises:
        ConfigError: If the seed is negative, too large or not an integer.
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        return np.random.SeedSequence()
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ConfigError(f"seed must lie in [0, 2**64), got {seed}")
    return np.random.SeedSequence(int(seed))


def derive_seed(seed, *keys):
    """Child SeedSequence keyed by the given non-negative integers."""
    root = seed_sequence(seed)
    spawn_key = tuple(root.spawn_key) + tuple(int(k) for k in keys)
    return np.random.SeedSequence(entropy=root.entropy, spawn_key=spawn_key)


def derive_rng(seed, *keys):
    """Generator for the stream keyed by `keys` under `seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


def point_seed(seed, point_index):
    """Seed sequence of one sweep point."""
    return derive_seed(seed, Stream.POINT, point_index)
