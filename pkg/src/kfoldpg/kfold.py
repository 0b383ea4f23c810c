"""Training loops: classic previous-iteration baseline, parameter-averaged
K-fold, and gradient-averaged K-fold.

Each iteration samples a fresh batch under the current policy.  In the K-fold
modes the batch is split round-robin into ``k`` folds; fold ``f`` is scored
with a baseline fitted only on the other folds.  Per-fold baselines are copies
of one persistent network, so every fold starts from the same warm weights
and no fold ever sees its own returns.

``k == 1`` in any K-fold mode runs the classic loop.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import streams
from .baseline import FitConfig, MlpBaseline, ZeroBaseline, mse_loss
from .errors import ContractError, NumericError
from .optim import GradEstimate, StepInfo, TrustRegionConfig, estimate_gradient, tnpg_update, trpo_update
from .policy import GaussianPolicy, fisher_vector_product, make_policy, mean_kl
from .rollout import Batch, FoldPlan, complement_view, compute_returns, make_folds, sample_batch

MODES = ("classic", "param_kfold", "param_kfold_scaled", "grad_kfold")
ALGOS = ("trpo", "tnpg")

# tag for refitting the persistent baseline, kept apart from per-fold fits
_BASELINE_REFIT = 4


@dataclass(frozen=True)
class RunConfig:
    mode: str = "grad_kfold"
    k: int = 1
    algo: str = "trpo"
    gamma: float = 0.99
    horizon: int = 500
    iterations: int = 500
    sample_budget: int = 50_000
    trust: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    seed: int = 0
    workers: int = 1
    normalize_advantages: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.algo not in ALGOS:
            raise ContractError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.k < 1:
            raise ContractError("k must be at least 1")
        if self.mode == "classic" and self.k != 1:
            object.__setattr__(self, "k", 1)
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError("gamma must lie in [0, 1]")
        if self.horizon < 1 or self.iterations < 1 or self.workers < 1:
            raise ContractError("horizon, iterations and workers must be positive")
        if self.sample_budget < self.horizon:
            raise ContractError("sample_budget must be at least the horizon")


@dataclass
class IterationMetrics:
    iteration: int
    avg_return: float
    mean_kl: float
    grad_norm: float
    baseline_loss: float
    wall_seconds: float


@dataclass
class RunResult:
    metrics: list[IterationMetrics]
    policy: GaussianPolicy


@dataclass
class FoldData:
    """Everything one policy update consumes."""
    states: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    grad: GradEstimate
    weights: Optional[np.ndarray] = None   # surrogate weights, 1/n when None


def policy_update(policy: GaussianPolicy, data: FoldData, algo: str, trust: TrustRegionConfig,
                  fvp_states: Optional[np.ndarray] = None) -> tuple[np.ndarray, StepInfo]:
    """One TRPO or TNPG update; Fisher products use ``fvp_states`` (default: ``data.states``)."""
    fvp_states = data.states if fvp_states is None else fvp_states

    def fvp(v):
        return fisher_vector_product(policy, fvp_states, v, trust.cg_damping)

    if algo == "tnpg":
        return tnpg_update(policy, data.grad, fvp, trust)
    return trpo_update(policy, data.grad, fvp, data.states, data.actions, data.advantages, trust,
                       weights=data.weights)


def param_averaged_update(policy: GaussianPolicy, folds: Sequence[FoldData], algo: str,
                          trust: TrustRegionConfig, workers: int = 1) -> np.ndarray:
    """Optimize from the same start on each fold's data, then average the parameters."""
    with _pool(workers) as pool:
        results = list(pool.map(lambda d: policy_update(policy, d, algo, trust)[0], folds))
    return np.mean(np.stack(results), axis=0)


def fit_fold_baselines(batch: Batch, plan: FoldPlan, persistent, fit: FitConfig, seed: int,
                       iteration: int, workers: int = 1) -> list:
    """One baseline per fold, each fitted on the complement of its fold."""
    def fit_one(fold):
        states, returns = complement_view(batch, plan, fold)
        rng = streams.stream(seed, streams.BASELINE_FIT, iteration, fold)
        return persistent.copy().fit(states, returns, fit, rng)

    with _pool(workers) as pool:
        return list(pool.map(fit_one, range(plan.k)))


def fold_data(policy: GaussianPolicy, batch: Batch, plan: FoldPlan, models, normalize=False) -> list[FoldData]:
    out = []
    for fold, model in enumerate(models):
        sub = batch.subset(plan.members(fold))
        states = sub.states()
        values = model.predict(states)
        est = estimate_gradient(policy, sub.trajectories, values, normalize_advantages=normalize)
        adv = sub.returns() - values
        if normalize:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        out.append(FoldData(states, sub.actions(), adv, est))
    return out


def performance(metrics: Sequence[IterationMetrics]) -> float:
    """Mean of the per-iteration average return (area under the return curve)."""
    if not metrics:
        raise ContractError("performance of an empty run is undefined")
    return float(np.mean([m.avg_return for m in metrics]))


class _SerialPool:
    def map(self, fn, items):
        return map(fn, items)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _pool(workers):
    return ThreadPoolExecutor(workers) if workers > 1 else _SerialPool()


def _setup(config: RunConfig, env, policy):
    if policy is None:
        policy = make_policy(env.spec.obs_dim, env.spec.action_dim,
                             streams.stream(config.seed, streams.POLICY_INIT))
    persistent = MlpBaseline(env.spec.obs_dim, streams.stream(config.seed, streams.BASELINE_INIT))
    return policy, persistent


def _sample(config: RunConfig, policy, env, iteration) -> Batch:
    ss = streams.seed_seq(config.seed, streams.ROLLOUT, iteration)
    batch = sample_batch(policy, env, config.sample_budget, config.horizon, ss, config.workers)
    for traj in batch.trajectories:
        compute_returns(traj, config.gamma)
    return batch


def _refit(persistent, batch: Batch, config: RunConfig, iteration):
    rng = streams.stream(config.seed, _BASELINE_REFIT, iteration)
    persistent.fit(batch.states(), batch.returns(), config.fit, rng)


def _loop(config: RunConfig, policy, env, body: Callable) -> RunResult:
    metrics = []
    for i in range(1, config.iterations + 1):
        start = time.perf_counter()
        batch = _sample(config, policy, env, i)
        try:
            new_params, grad_norm, loss = body(policy, batch, i)
        except NumericError as exc:
            raise NumericError(f"iteration {i} (seed {config.seed}): {exc}") from exc
        new_policy = policy.with_params(new_params)
        kl = mean_kl(policy, new_policy, batch.states())
        policy = new_policy
        metrics.append(IterationMetrics(i, batch.average_return(), kl, grad_norm, loss,
                                        time.perf_counter() - start))
    return RunResult(metrics, policy)


def run_classic(config: RunConfig, env, policy: Optional[GaussianPolicy] = None) -> RunResult:
    """Score each batch with the baseline fitted on the previous batch (zero at first)."""
    policy, persistent = _setup(config, env, policy)
    previous = ZeroBaseline()

    def body(policy, batch, i):
        nonlocal previous
        states, returns = batch.states(), batch.returns()
        values = previous.predict(states)
        est = estimate_gradient(policy, batch.trajectories, values,
                                normalize_advantages=config.normalize_advantages)
        adv = returns - values
        if config.normalize_advantages:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        data = FoldData(states, batch.actions(), adv, est)
        params, _ = policy_update(policy, data, config.algo, config.trust)
        loss = mse_loss(previous, states, returns)
        _refit(persistent, batch, config, i)
        previous = persistent
        return params, float(np.linalg.norm(est.grad)), loss

    return _loop(config, policy, env, body)


def _fold_loss(plan: FoldPlan, batch: Batch, models) -> float:
    sq, n = 0.0, 0
    for fold, model in enumerate(models):
        sub = batch.subset(plan.members(fold))
        states, returns = sub.states(), sub.returns()
        sq += mse_loss(model, states, returns) * len(returns)
        n += len(returns)
    return sq / n


def run_param_kfold(config: RunConfig, env, policy: Optional[GaussianPolicy] = None) -> RunResult:
    """Per-fold trust-region updates from the same start, parameters averaged.

    In ``param_kfold_scaled`` mode each fold's KL radius is ``k * delta``.
    """
    if config.mode not in ("param_kfold", "param_kfold_scaled"):
        raise ContractError(f"run_param_kfold called with mode {config.mode!r}")
    if config.k == 1:
        return run_classic(config, env, policy)
    policy, persistent = _setup(config, env, policy)
    trust = config.trust
    if config.mode == "param_kfold_scaled":
        trust = replace(trust, delta=trust.delta * config.k)

    def body(policy, batch, i):
        plan = make_folds(batch, config.k)
        models = fit_fold_baselines(batch, plan, persistent, config.fit, config.seed, i, config.workers)
        folds = fold_data(policy, batch, plan, models, config.normalize_advantages)
        params = param_averaged_update(policy, folds, config.algo, trust, config.workers)
        grad = np.mean(np.stack([f.grad.grad for f in folds]), axis=0)
        loss = _fold_loss(plan, batch, models)
        _refit(persistent, batch, config, i)
        return params, float(np.linalg.norm(grad)), loss

    return _loop(config, policy, env, body)


def run_grad_kfold(config: RunConfig, env, policy: Optional[GaussianPolicy] = None) -> RunResult:
    """Average per-fold gradients, then take one update with full-batch Fisher and line search."""
    if config.mode != "grad_kfold":
        raise ContractError(f"run_grad_kfold called with mode {config.mode!r}")
    if config.k == 1:
        return run_classic(config, env, policy)
    policy, persistent = _setup(config, env, policy)

    def body(policy, batch, i):
        plan = make_folds(batch, config.k)
        models = fit_fold_baselines(batch, plan, persistent, config.fit, config.seed, i, config.workers)
        folds = fold_data(policy, batch, plan, models, config.normalize_advantages)
        grad = np.mean(np.stack([f.grad.grad for f in folds]), axis=0)
        # surrogate weights 1/(k * n_f) make the surrogate gradient equal the fold average
        weights = np.concatenate([np.full(len(f.advantages), 1.0 / (config.k * len(f.advantages)))
                                  for f in folds])
        advantages = np.concatenate([f.advantages for f in folds])
        surr = float(np.mean([f.grad.surrogate_value for f in folds]))
        data = FoldData(np.concatenate([f.states for f in folds]),
                        np.concatenate([f.actions for f in folds]),
                        advantages, GradEstimate(grad, surr, len(advantages)), weights)
        params, _ = policy_update(policy, data, config.algo, config.trust)
        loss = _fold_loss(plan, batch, models)
        _refit(persistent, batch, config, i)
        return params, float(np.linalg.norm(grad)), loss

    return _loop(config, policy, env, body)


def run(config: RunConfig, env, policy: Optional[GaussianPolicy] = None) -> RunResult:
    if config.mode == "classic":
        return run_classic(config, env, policy)
    if config.mode == "grad_kfold":
        return run_grad_kfold(config, env, policy)
    return run_param_kfold(config, env, policy)
