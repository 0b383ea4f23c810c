"""Two small continuous-control tasks.

``PointMass2D`` is a planar point mass rewarded for forward velocity with a
quadratic control cost and an alive bonus, terminated when it leaves the band
``|y| <= 1``.  ``LQR1D`` is the scalar system ``s' = s + a`` with quadratic
cost, for which the discounted value of any linear policy is known in closed
form.

Both ``step`` methods are pure functions of ``(state, action)``; all
randomness lives in ``reset`` and in the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DEFAULT_HORIZON = 100


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_horizon: int

    def __post_init__(self):
        if self.obs_dim < 1 or self.action_dim < 1 or self.max_horizon < 1:
            raise ContractError("environment dimensions and horizon must be positive")
        if np.any(np.asarray(self.action_low) >= np.asarray(self.action_high)):
            raise ContractError("action_low must be below action_high")


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool


class PointMass2D:
    name = "pointmass2d"
    dt = 0.05
    ctrl_cost = 0.005
    alive_bonus = 1.0

    def __init__(self, horizon: int = DEFAULT_HORIZON, reset_noise: float = 0.01):
        self.spec = EnvSpec(4, 2, np.full(2, -1.0), np.full(2, 1.0), horizon)
        self.reset_noise = reset_noise

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        # state = (px, py, vx, vy)
        return self.reset_noise * rng.standard_normal(4)

    def step(self, state, action) -> StepResult:
        return step_pointmass(state, action, self.dt)


class LQR1D:
    name = "lqr1d"
    action_bound = 4.0
    action_cost = 0.1

    def __init__(self, horizon: int = DEFAULT_HORIZON):
        b = self.action_bound
        self.spec = EnvSpec(1, 1, np.array([-b]), np.array([b]), horizon)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=1)

    def step(self, state, action) -> StepResult:
        return step_lqr(state, action)


ENVS = {PointMass2D.name: PointMass2D, LQR1D.name: LQR1D}


def make_env(name: str, horizon: int = DEFAULT_HORIZON):
    try:
        cls = ENVS[name]
    except KeyError:
        raise ContractError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
    return cls(horizon=horizon)


def step_pointmass(state, action, dt: float = PointMass2D.dt) -> StepResult:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (4,) or not np.all(np.isfinite(state)):
        raise ContractError(f"pointmass state must be 4 finite values, got {state}")
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    v = state[2:] + dt * a
    p = state[:2] + dt * v
    reward = v[0] - PointMass2D.ctrl_cost * float(a @ a) + PointMass2D.alive_bonus
    return StepResult(np.concatenate([p, v]), float(reward), bool(abs(p[1]) > 1.0))


def step_lqr(state, action) -> StepResult:
    s = float(np.asarray(state, dtype=np.float64).reshape(-1)[0])
    a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0],
                      -LQR1D.action_bound, LQR1D.action_bound))
    reward = -(s * s + LQR1D.action_cost * a * a)
    return StepResult(np.array([s + a]), reward, False)


def lqr_value_oracle(gain: float, gamma: float) -> float:
    """Coefficient ``c`` with ``V(s) = c * s**2`` for the policy ``a = -gain * s``.

    Sums the discounted cost series ``(1 + 0.1 g^2) s^2 * sum_t (gamma (1-g)^2)^t``;
    action clipping is ignored, which is exact while ``|gain * s| <= 4``.
    """
    contraction = gamma * (1.0 - gain) ** 2
    if not contraction < 1.0:
        raise ContractError(f"gain {gain} is not stabilizing at gamma={gamma}")
    return -(1.0 + LQR1D.action_cost * gain ** 2) / (1.0 - contraction)


def lqr_optimal_gain(gamma: float, tol: float = 1e-14, max_iter: int = 100_000) -> tuple[float, float]:
    """Discounted scalar Riccati fixed point for ``s' = s + a``.

    Returns ``(gain, p)`` where the optimal cost-to-go is ``p * s**2`` and the
    optimal action is ``-gain * s``.
    """
    r = LQR1D.action_cost
    p = 1.0
    for _ in range(max_iter):
        p_next = 1.0 + gamma * p - (gamma * p) ** 2 / (r + gamma * p)
        if abs(p_next - p) < tol:
            p = p_next
            break
        p = p_next
    return gamma * p / (r + gamma * p), p
