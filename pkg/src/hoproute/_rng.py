from __future__ import annotations

from typing import Union

import numpy as np

Seed = Union[int, np.random.SeedSequence, None]


def seed_sequence(seed: Seed, *keys: int) -> np.random.SeedSequence:
    """Child seed sequence addressed by ``keys``; independent of call order."""
    keys = tuple(int(k) for k in keys)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence(entropy=0 if seed is None else int(seed), spawn_key=keys)


def derive(seed: Seed, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *keys))
