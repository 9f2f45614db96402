"""Counter-based seed splitting: every stream is keyed by (master, *keys)."""

from __future__ import annotations

import numpy as np


def _key(v) -> int:
    v = int(v)
    if v < 0:
        raise ValueError("seed keys must be nonnegative")
    return v


def stream(master: int, *keys: int) -> np.random.Generator:
    """Independent generator for the given master seed and key path."""
    return np.random.default_rng(np.random.SeedSequence([_key(master), *(_key(k) for k in keys)]))


def child_seed(master: int, *keys: int) -> int:
    """A 64-bit seed derived from a key path."""
    state = np.random.SeedSequence([_key(master), *(_key(k) for k in keys)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
