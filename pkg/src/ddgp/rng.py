"""Deterministic RNG stream derivation.

A run owns a single integer seed. Every stochastic site (training step, layer
draw, batch sampler, evaluation pass) derives its own child generator from
(seed, *tags) through a splitmix64 mix, so streams are independent of call
order and stable under interleaved evaluation.
"""

from __future__ import annotations

import numpy as np
import torch

_MASK64 = (1 << 64) - 1

# fixed domain tags for the library's stochastic sites
DOMAIN_BATCH = 1
DOMAIN_FORWARD = 2
DOMAIN_INIT = 3
DOMAIN_EVAL = 4
DOMAIN_SPLIT = 5

PURPOSE_INDUCING = 1
PURPOSE_PATH = 2


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix(seed: int, *tags: int) -> int:
    """Collapse (seed, tags...) into one well-mixed 63-bit value."""
    h = _splitmix64(seed & _MASK64)
    for t in tags:
        h = _splitmix64((h ^ (t & _MASK64)) & _MASK64)
    return h & ((1 << 63) - 1)  # torch seeds must be non-negative int64


def generator(seed: int, *tags: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(mix(seed, *tags))
    return g


def numpy_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(mix(seed, *tags))
