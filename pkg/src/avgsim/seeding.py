"""Seed derivation for trials and per-run random streams.

Per-trial seeds are ``master XOR splitmix64(trial_index)`` so that nearby
trial indices never produce correlated generators. Inside a run, a
``SeedSequence`` is spawned into named child streams.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

STREAM_NAMES = ("init", "edges", "extra")


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (state is advanced by the golden gamma first)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, trial_index: int) -> int:
    return (int(master) & MASK64) ^ splitmix64(int(trial_index))


def streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent PCG64 generators for initial state, edge sampling and protocol extras."""
    ss = np.random.SeedSequence(int(seed) & MASK64)
    children = ss.spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.PCG64(c)) for name, c in zip(STREAM_NAMES, children)}


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & MASK64)))
