"""Deterministic seed derivation.

A single master seed fans out to every random decision in a run through
numpy SeedSequence spawn keys, so any (phase, episode, agent, ...) tuple
always maps to the same generator regardless of execution order.
"""
from __future__ import annotations

import numpy as np

# Reserved first components of spawn keys. Evaluation contexts use
# EVAL_BASE + condition index so they never collide with training phases.
KEY_INIT = 0
KEY_BASELINE = 1
KEY_ADVERSARY_COLLISION = 2
KEY_ADVERSARY_OFFROAD = 3
KEY_RETRAIN_COLLISION = 4
KEY_RETRAIN_OFFROAD = 5
KEY_EVAL_BASE = 100
KEY_UPDATE_BASE = 50_000


class SeedTree:
    """Splittable seed namespace rooted at one master seed."""

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)

    def sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=tuple(int(k) for k in key))

    def rng(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(*key))

    def child_int(self, *key: int) -> int:
        """A derived 63-bit seed, for APIs that want a plain integer."""
        return int(self.sequence(*key).generate_state(1, np.uint64)[0] >> 1)
