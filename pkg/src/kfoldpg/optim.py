"""Baselined policy-gradient estimator and the trust-region update rules.

The estimator averages ``grad log pi(a_t|s_t) * (R_t - b(s_t))`` over every
step in the given trajectories (``1/total_steps`` normalization).  TNPG takes
the CG-approximated natural-gradient direction scaled so that the quadratic
KL model equals ``delta``; TRPO adds a backtracking line search on the
importance-ratio surrogate and the measured mean KL.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, NumericError
from .policy import GaussianPolicy, dist, log_prob, mean_kl, score_dot
from .rollout import Batch, Trajectory, compute_returns

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class GradEstimate:
    grad: np.ndarray
    surrogate_value: float
    steps_used: int


@dataclass(frozen=True)
class TrustRegionConfig:
    delta: float = 0.08
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_ratio: float = 0.8
    max_backtracks: int = 10

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractError("delta must be positive")
        if self.cg_iters < 1 or self.max_backtracks < 1:
            raise ContractError("cg_iters and max_backtracks must be positive")
        if self.cg_damping < 0 or not 0 < self.backtrack_ratio < 1:
            raise ContractError("need cg_damping >= 0 and 0 < backtrack_ratio < 1")


@dataclass
class CGResult:
    x: np.ndarray
    residual_norm: float
    iterations: int


@dataclass
class StepInfo:
    step: np.ndarray
    cg_residual: float
    quad_kl: float            # 0.5 * s^T A s of the accepted step
    accepted: bool = True
    backtracks: int = 0
    mean_kl: float = float("nan")
    surrogate_gain: float = float("nan")


def advantages_from(trajectories: Sequence[Trajectory], baseline_values, gamma: Optional[float] = None,
                    normalize: bool = False) -> np.ndarray:
    if gamma is not None:
        for t in trajectories:
            if t.returns is None:
                compute_returns(t, gamma)
    returns = Batch(list(trajectories)).returns()
    baseline_values = np.asarray(baseline_values, dtype=np.float64).reshape(-1)
    if baseline_values.shape != returns.shape:
        raise ContractError(f"got {baseline_values.size} baseline values for {returns.size} steps")
    adv = returns - baseline_values
    if normalize and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def estimate_gradient(policy: GaussianPolicy, trajectories: Sequence[Trajectory], baseline_values,
                      gamma: Optional[float] = None, normalize_advantages: bool = False) -> GradEstimate:
    """Baselined score-function gradient averaged over all steps.

    ``baseline_values`` holds one prediction per step, in trajectory order.
    Returns already stored on the trajectories are reused; ``gamma`` is only
    needed when they are missing.
    """
    adv = advantages_from(trajectories, baseline_values, gamma, normalize_advantages)
    batch = Batch(list(trajectories))
    states, actions = batch.states(), batch.actions()
    n = len(adv)
    grad = score_dot(policy, states, actions, adv) / n
    logp = log_prob(dist(policy, states), actions)
    return GradEstimate(grad, float(np.dot(logp, adv) / n), n)


def surrogate(policy: GaussianPolicy, states, actions, advantages, old_logp, weights) -> float:
    """``sum_t weights[t] * exp(logp_new - logp_old) * A_t``."""
    ratio = np.exp(log_prob(dist(policy, states), actions) - old_logp)
    return float(np.dot(weights, ratio * advantages))


def cg_solve(apply_A: Operator, b, iters: int = 10, tol: float = 1e-10) -> CGResult:
    if iters < 1:
        raise ContractError("iters must be at least 1")
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    it = 0
    while it < iters and np.sqrt(rr) > tol:
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0:
            raise NumericError(f"operator is not positive definite along a CG direction (pAp={pAp})")
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise NumericError("non-finite CG residual")
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return CGResult(x, float(np.sqrt(rr)), it)


def natural_step(grad, fvp: Operator, delta: float, cg_iters: int) -> tuple[np.ndarray, CGResult, float]:
    """CG direction ``d ~ A^{-1} g`` scaled so that ``0.5 s^T A s == delta``."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.any(grad):
        return np.zeros_like(grad), CGResult(np.zeros_like(grad), 0.0, 0), 0.0
    cg = cg_solve(fvp, grad, iters=cg_iters)
    d = cg.x
    dAd = float(d @ fvp(d))
    if not np.isfinite(dAd) or dAd <= 0:
        raise NumericError(f"d^T F d = {dAd} is not positive")
    scale = np.sqrt(2.0 * delta / dAd)
    return scale * d, cg, 0.5 * scale * scale * dAd


def tnpg_update(policy: GaussianPolicy, grad_est: GradEstimate, fvp: Operator,
                config: TrustRegionConfig = TrustRegionConfig()) -> tuple[np.ndarray, StepInfo]:
    step, cg, quad = natural_step(grad_est.grad, fvp, config.delta, config.cg_iters)
    return policy.params() + step, StepInfo(step, cg.residual_norm, quad)


def trpo_update(policy: GaussianPolicy, grad_est: GradEstimate, fvp: Operator, states, actions,
                advantages, config: TrustRegionConfig = TrustRegionConfig(),
                weights=None) -> tuple[np.ndarray, StepInfo]:
    """TNPG full step followed by backtracking on ``ratio^j``, ``j = 0..max_backtracks-1``.

    A candidate is accepted when the surrogate does not decrease and the mean
    KL on ``states`` stays within ``delta``.  ``weights`` are the per-step
    surrogate weights (``1/n`` by default) and must match the weighting that
    produced ``grad_est`` for the surrogate gradient to agree with it.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    advantages = np.asarray(advantages, dtype=np.float64)
    if weights is None:
        weights = np.full(len(advantages), 1.0 / len(advantages))
    old_params = policy.params()
    step, cg, quad = natural_step(grad_est.grad, fvp, config.delta, config.cg_iters)
    if not np.any(step):
        return old_params, StepInfo(step, cg.residual_norm, 0.0, accepted=False, mean_kl=0.0,
                                   surrogate_gain=0.0)
    old_logp = log_prob(dist(policy, states), actions)
    base = surrogate(policy, states, actions, advantages, old_logp, weights)
    for j in range(config.max_backtracks):
        frac = config.backtrack_ratio ** j
        candidate = policy.with_params(old_params + frac * step)
        gain = surrogate(candidate, states, actions, advantages, old_logp, weights) - base
        kl = mean_kl(policy, candidate, states)
        if gain >= 0 and kl <= config.delta:
            return candidate.params(), StepInfo(frac * step, cg.residual_norm, quad * frac * frac,
                                                backtracks=j, mean_kl=kl, surrogate_gain=gain)
    return old_params, StepInfo(np.zeros_like(step), cg.residual_norm, 0.0, accepted=False,
                                backtracks=config.max_backtracks, mean_kl=0.0, surrogate_gain=0.0)
