"""Seed derivation.  Every random draw in a run comes from a stream keyed by
(master seed, purpose, indices...), so results never depend on the order in
which workers happen to execute.
"""

import numpy as np

POLICY_INIT = 0
BASELINE_INIT = 1
ROLLOUT = 2
BASELINE_FIT = 3


def seed_seq(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *(int(k) for k in keys)])


def child(ss: np.random.SeedSequence, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, int(index)))


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_seq(seed, *keys))
