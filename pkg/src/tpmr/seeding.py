"""Seeded random streams keyed by (seed, *keys), independent of evaluation order."""

import numpy as np


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, *keys); task order never changes the draws."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *keys]))


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]).generate_state(1)[0])
