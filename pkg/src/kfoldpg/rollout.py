"""Trajectory sampling, discounted returns, and K-fold partitioning of whole
trajectories.

Episode ``j`` of a batch draws all of its randomness (reset noise and action
noise) from ``child(batch_seed, j)``.  Episodes are generated in waves of
``workers`` and assembled in index order, so the same seed yields the same
batch for every worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .policy import GaussianPolicy, dist, sample_action
from .streams import child


@dataclass
class Trajectory:
    states: np.ndarray   # (L + 1, obs_dim), last row is the final observation
    actions: np.ndarray  # (L, action_dim)
    rewards: np.ndarray  # (L,)
    returns: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.rewards)
        if self.states.shape[0] != n + 1 or self.actions.shape[0] != n:
            raise ContractError("trajectory arrays have inconsistent lengths")

    def __len__(self):
        return len(self.rewards)

    @property
    def undiscounted_return(self) -> float:
        return float(np.sum(self.rewards))


@dataclass
class Batch:
    trajectories: list[Trajectory]

    @property
    def total_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __len__(self):
        return len(self.trajectories)

    def states(self) -> np.ndarray:
        return np.concatenate([t.states[:-1] for t in self.trajectories])

    def actions(self) -> np.ndarray:
        return np.concatenate([t.actions for t in self.trajectories])

    def returns(self) -> np.ndarray:
        if any(t.returns is None for t in self.trajectories):
            raise ContractError("returns have not been computed")
        return np.concatenate([t.returns for t in self.trajectories])

    def subset(self, indices: Sequence[int]) -> "Batch":
        return Batch([self.trajectories[i] for i in indices])

    def average_return(self) -> float:
        return float(np.mean([t.undiscounted_return for t in self.trajectories]))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: tuple[int, ...]  # trajectory index -> fold index in 0..k-1

    def members(self, fold: int) -> list[int]:
        if not 0 <= fold < self.k:
            raise ContractError(f"fold index {fold} outside 0..{self.k - 1}")
        return [j for j, f in enumerate(self.assignment) if f == fold]

    def others(self, fold: int) -> list[int]:
        if not 0 <= fold < self.k:
            raise ContractError(f"fold index {fold} outside 0..{self.k - 1}")
        return [j for j, f in enumerate(self.assignment) if f != fold]


def run_episode(policy: GaussianPolicy, env, horizon: int, rng: np.random.Generator) -> Trajectory:
    state = env.reset(rng)
    states, actions, rewards = [state], [], []
    for _ in range(horizon):
        action = sample_action(dist(policy, state), rng)
        result = env.step(state, action)
        actions.append(action)
        rewards.append(result.reward)
        state = result.next_state
        states.append(state)
        if result.done:
            break
    return Trajectory(np.array(states), np.array(actions), np.array(rewards))


def sample_batch(policy: GaussianPolicy, env, sample_budget: int, horizon: int,
                 seed: np.random.SeedSequence, workers: int = 1) -> Batch:
    """Collect whole episodes until at least ``sample_budget`` steps are stored."""
    if not sample_budget >= horizon >= 1:
        raise ContractError("need sample_budget >= horizon >= 1")

    def episode(j):
        return run_episode(policy, env, horizon, np.random.default_rng(child(seed, j)))

    trajectories: list[Trajectory] = []
    steps = 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while steps < sample_budget:
            start = len(trajectories)
            idx = range(start, start + max(workers, 1))
            wave = list(pool.map(episode, idx)) if pool else [episode(j) for j in idx]
            for traj in wave:
                trajectories.append(traj)
                steps += len(traj)
                if steps >= sample_budget:
                    break
    finally:
        if pool:
            pool.shutdown()
    return Batch(trajectories)


def compute_returns(traj: Trajectory, gamma: float) -> np.ndarray:
    if not 0.0 <= gamma <= 1.0:
        raise ContractError("gamma must lie in [0, 1]")
    out = np.empty(len(traj.rewards))
    running = 0.0
    for t in range(len(traj.rewards) - 1, -1, -1):
        running = traj.rewards[t] + gamma * running
        out[t] = running
    traj.returns = out
    return out


def make_folds(batch: Batch, k: int) -> FoldPlan:
    n = len(batch)
    if k < 1:
        raise ContractError("k must be at least 1")
    if k >= n:
        raise ContractError(f"need k < number of trajectories, got k={k}, N={n}")
    return FoldPlan(k, tuple(j % k for j in range(n)))


def complement_view(batch: Batch, plan: FoldPlan, fold: int) -> tuple[np.ndarray, np.ndarray]:
    """States and returns of every trajectory outside ``fold``."""
    others = plan.others(fold)
    if not others:
        obs_dim = batch.trajectories[0].states.shape[1]
        return np.empty((0, obs_dim)), np.empty(0)
    sub = batch.subset(others)
    return sub.states(), sub.returns()
