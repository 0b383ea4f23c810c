import math

import numpy as np
import pytest

from kfoldpg import streams
from kfoldpg.baseline import FitConfig, MlpBaseline, TabularBaseline
from kfoldpg.envs import LQR1D, PointMass2D
from kfoldpg.errors import ContractError
from kfoldpg.kfold import (FoldData, IterationMetrics, RunConfig, fit_fold_baselines, fold_data,
                           param_averaged_update, performance, policy_update, run, run_classic,
                           run_grad_kfold, run_param_kfold)
from kfoldpg.numkit import finite_diff_grad
from kfoldpg.optim import GradEstimate, TrustRegionConfig, estimate_gradient, surrogate
from kfoldpg.policy import dist, log_prob, make_policy
from kfoldpg.rollout import compute_returns, make_folds, sample_batch


def small_policy(obs_dim=1, action_dim=1, seed=0):
    return make_policy(obs_dim, action_dim, np.random.default_rng(seed), hidden_sizes=(6,), activations=("tanh",))


def cfg(**kw):
    base = dict(mode="classic", k=1, horizon=5, iterations=3, sample_budget=40, seed=3)
    base.update(kw)
    return RunConfig(**base)


def lqr_batch(policy, seed=0, iteration=1, budget=40, horizon=5):
    ss = streams.seed_seq(seed, streams.ROLLOUT, iteration)
    b = sample_batch(policy, LQR1D(horizon), budget, horizon, ss)
    for t in b.trajectories:
        compute_returns(t, 0.99)
    return b


def strip_wall(metrics):
    return [(m.iteration, m.avg_return, m.mean_kl, m.grad_norm, m.baseline_loss) for m in metrics]


def test_classic_first_iteration_uses_zero_baseline():
    c = cfg(iterations=1)
    res = run_classic(c, LQR1D(5), small_policy())
    p0 = small_policy()
    batch = lqr_batch(p0, seed=c.seed)
    est = estimate_gradient(p0, batch.trajectories, np.zeros(batch.total_steps))
    data = FoldData(batch.states(), batch.actions(), batch.returns(), est)
    expected, _ = policy_update(p0, data, "trpo", c.trust)
    assert np.array_equal(res.policy.params(), expected)
    m = res.metrics[0]
    assert m.grad_norm == pytest.approx(np.linalg.norm(est.grad), rel=1e-15)
    assert m.baseline_loss == pytest.approx(np.mean(batch.returns() ** 2), rel=1e-12)


def test_tabular_baseline_on_repeated_batch_zero_gradient():
    p = small_policy()
    first, second = lqr_batch(p, seed=11), lqr_batch(p, seed=11)
    table = TabularBaseline().fit(first.states(), first.returns())
    est = estimate_gradient(p, second.trajectories, table.predict(second.states()))
    assert np.array_equal(est.grad, np.zeros(p.n_params))


@pytest.mark.parametrize("mode,k", [("classic", 1), ("grad_kfold", 2), ("param_kfold", 2),
                                    ("param_kfold_scaled", 3)])
def test_runs_are_deterministic(mode, k):
    a = run(cfg(mode=mode, k=k), LQR1D(5), small_policy())
    b = run(cfg(mode=mode, k=k), LQR1D(5), small_policy())
    assert strip_wall(a.metrics) == strip_wall(b.metrics)
    assert np.array_equal(a.policy.params(), b.policy.params())


@pytest.mark.parametrize("mode", ["grad_kfold", "param_kfold", "param_kfold_scaled"])
def test_k1_routes_to_classic_bit_for_bit(mode):
    classic = run(cfg(iterations=4), LQR1D(5), small_policy())
    other = run(cfg(mode=mode, k=1, iterations=4), LQR1D(5), small_policy())
    assert strip_wall(classic.metrics) == strip_wall(other.metrics)
    assert np.array_equal(classic.policy.params(), other.policy.params())


def test_classic_coerces_k():
    assert RunConfig(mode="classic", k=4).k == 1
    with pytest.raises(ContractError):
        RunConfig(mode="grad_kfold", k=0)
    with pytest.raises(ContractError):
        RunConfig(mode="nope")


def test_wrong_mode_for_loop():
    with pytest.raises(ContractError):
        run_grad_kfold(cfg(mode="param_kfold", k=2), LQR1D(5))
    with pytest.raises(ContractError):
        run_param_kfold(cfg(mode="grad_kfold", k=2), LQR1D(5))


def test_k_not_below_trajectory_count():
    # 40 / 5 = 8 trajectories per batch
    with pytest.raises(ContractError):
        run(cfg(mode="grad_kfold", k=8), LQR1D(5), small_policy())


def fold_setup(seed=0):
    p = small_policy(seed=seed)
    batch = lqr_batch(p, seed=seed)
    est = estimate_gradient(p, batch.trajectories, np.zeros(batch.total_steps))
    data = FoldData(batch.states(), batch.actions(), batch.returns(), est)
    return p, batch, data


@pytest.mark.parametrize("algo", ["trpo", "tnpg"])
def test_param_average_of_identical_folds_is_single_update(algo):
    p, _, data = fold_setup()
    trust = TrustRegionConfig()
    single, _ = policy_update(p, data, algo, trust)
    averaged = param_averaged_update(p, [data] * 4, algo, trust)
    assert np.allclose(averaged, single, rtol=1e-12, atol=1e-15)


def test_param_average_cancels_opposite_steps():
    p, _, data = fold_setup(1)
    neg = FoldData(data.states, data.actions, -data.advantages,
                   GradEstimate(-data.grad.grad, -data.grad.surrogate_value, data.grad.steps_used))
    trust = TrustRegionConfig()
    up, _ = policy_update(p, data, "tnpg", trust)
    down, _ = policy_update(p, neg, "tnpg", trust)
    assert np.allclose(up - p.params(), -(down - p.params()), rtol=1e-12, atol=1e-15)
    averaged = param_averaged_update(p, [data, neg], "tnpg", trust)
    assert np.allclose(averaged, p.params(), rtol=0, atol=1e-15)


def test_param_average_workers_independent():
    p, batch, _ = fold_setup(2)
    plan = make_folds(batch, 4)
    models = fit_fold_baselines(batch, plan, MlpBaseline(1, np.random.default_rng(0)), FitConfig(), 0, 1)
    folds = fold_data(p, batch, plan, models)
    trust = TrustRegionConfig()
    assert np.array_equal(param_averaged_update(p, folds, "trpo", trust, 1),
                          param_averaged_update(p, folds, "trpo", trust, 4))


def test_grad_mode_weighted_surrogate_gradient_is_fold_average():
    # the weighted importance surrogate that drives the grad-mode line search
    # must have the averaged fold gradient as its gradient at the old params
    p = small_policy(seed=4)
    batch = lqr_batch(p, seed=4, budget=35)
    plan = make_folds(batch, 3)
    models = fit_fold_baselines(batch, plan, MlpBaseline(1, np.random.default_rng(1)), FitConfig(), 4, 1)
    folds = fold_data(p, batch, plan, models)
    g = np.mean([f.grad.grad for f in folds], axis=0)
    s = np.concatenate([f.states for f in folds])
    a = np.concatenate([f.actions for f in folds])
    adv = np.concatenate([f.advantages for f in folds])
    w = np.concatenate([np.full(len(f.advantages), 1 / (3 * len(f.advantages))) for f in folds])
    old = log_prob(dist(p, s), a)
    fd = finite_diff_grad(lambda v: surrogate(p.with_params(v), s, a, adv, old, w), p.params(), 1e-5)
    assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) < 1e-6


@pytest.mark.parametrize("k", [2, 4])
def test_fold_baselines_ignore_own_fold(k):
    p = small_policy(seed=5)
    batch = lqr_batch(p, seed=5, budget=50)
    plan = make_folds(batch, k)
    persistent = MlpBaseline(1, np.random.default_rng(2))
    clean = fit_fold_baselines(batch, plan, persistent, FitConfig(), 9, 1)
    original = [t.returns.copy() for t in batch.trajectories]
    for poisoned_fold in range(k):
        for j in plan.members(poisoned_fold):
            batch.trajectories[j].returns = original[j] + 1e6
        dirty = fit_fold_baselines(batch, plan, persistent, FitConfig(), 9, 1)
        for fold in range(k):
            same = np.array_equal(clean[fold].net.flatten(), dirty[fold].net.flatten())
            assert same == (fold == poisoned_fold)
        # persistent model is never touched by per-fold fits
        assert persistent.adam is None
        for j in plan.members(poisoned_fold):
            batch.trajectories[j].returns = original[j]


def test_fold_baselines_workers_independent():
    p = small_policy(seed=6)
    batch = lqr_batch(p, seed=6)
    plan = make_folds(batch, 4)
    persistent = MlpBaseline(1, np.random.default_rng(3))
    a = fit_fold_baselines(batch, plan, persistent, FitConfig(), 0, 1, workers=1)
    b = fit_fold_baselines(batch, plan, persistent, FitConfig(), 0, 1, workers=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.net.flatten(), y.net.flatten())


def test_performance_examples():
    m = lambda r: IterationMetrics(1, r, 0.0, 0.0, 0.0, 0.0)
    assert performance([m(5.0)]) == 5.0
    assert performance([m(1.0), m(2.0), m(3.0)]) == 2.0
    with pytest.raises(ContractError):
        performance([])


@pytest.mark.parametrize("mode,k,algo", [("classic", 1, "tnpg"), ("grad_kfold", 2, "trpo"),
                                         ("param_kfold", 3, "tnpg"), ("param_kfold_scaled", 2, "trpo")])
def test_metrics_finite_and_ordered(mode, k, algo):
    env = PointMass2D(horizon=10)
    res = run(RunConfig(mode=mode, k=k, algo=algo, horizon=10, iterations=4, sample_budget=60, seed=1),
              env, small_policy(4, 2))
    assert [m.iteration for m in res.metrics] == [1, 2, 3, 4]
    for m in res.metrics:
        for v in (m.avg_return, m.mean_kl, m.grad_norm, m.baseline_loss, m.wall_seconds):
            assert math.isfinite(v)


def test_trpo_modes_respect_delta():
    env = PointMass2D(horizon=10)
    for mode in ("classic", "grad_kfold"):
        res = run(RunConfig(mode=mode, k=2, horizon=10, iterations=5, sample_budget=80, seed=2),
                  env, small_policy(4, 2))
        assert max(m.mean_kl for m in res.metrics) <= 0.08 + 1e-9


def test_default_policy_built_from_seed():
    a = run(cfg(iterations=1), LQR1D(5))
    b = run(cfg(iterations=1), LQR1D(5))
    assert a.policy.mean_net.spec.hidden_sizes == (100, 50, 25)
    assert np.array_equal(a.policy.params(), b.policy.params())


def test_fvp_states_override():
    p, batch, data = fold_setup(3)
    trust = TrustRegionConfig()
    default, _ = policy_update(p, data, "tnpg", trust)
    explicit, _ = policy_update(p, data, "tnpg", trust, fvp_states=batch.states())
    assert np.array_equal(default, explicit)
    # Fisher on a different state set gives a different step
    other, _ = policy_update(p, data, "tnpg", trust, fvp_states=batch.states()[:5])
    assert not np.array_equal(default, other)
