import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from kfoldpg.errors import ContractError, ShapeError
from kfoldpg.numkit import MlpSpec, finite_diff_grad, mlp_backward, mlp_forward, unflatten, zeros_mlp
from kfoldpg.policy import (GaussianHead, GaussianPolicy, dist, fisher_vector_product, grad_log_prob,
                            log_prob, make_policy, mean_kl, sample_action, score_dot)


def tiny_policy(seed, obs_dim=2, hidden=(3,), acts=("tanh",), action_dim=2, scale=0.6):
    rng = np.random.default_rng(seed)
    spec = MlpSpec(obs_dim, hidden, acts, action_dim)
    return GaussianPolicy(unflatten(spec, rng.normal(scale=scale, size=spec.n_params)),
                          rng.normal(scale=0.3, size=action_dim))


def explicit_fisher(policy, states):
    """Assemble F from per-state Jacobians obtained by backprop of unit output vectors."""
    n_mean = policy.n_mean_params
    F = np.zeros((policy.n_params, policy.n_params))
    inv_var = np.exp(-2 * policy.log_std)
    for s in states:
        J = np.stack([mlp_backward(policy.mean_net, s, e)[0] for e in np.eye(policy.action_dim)])
        F[:n_mean, :n_mean] += J.T @ np.diag(inv_var) @ J
    F[:n_mean, :n_mean] /= len(states)
    F[n_mean:, n_mean:] = 2 * np.eye(policy.action_dim)
    return F


def test_param_roundtrip_and_count():
    p = make_policy(4, 2, np.random.default_rng(0))
    assert p.n_params == p.mean_net.n_params + 2
    v = np.random.default_rng(1).normal(size=p.n_params)
    assert np.array_equal(p.with_params(v).params(), v)
    # default architecture: 4->100->50->25->2
    assert p.mean_net.spec.hidden_sizes == (100, 50, 25)
    assert p.mean_net.spec.activations == ("tanh", "tanh", "identity")
    assert np.array_equal(p.log_std, np.zeros(2))


def test_dist_zero_and_identity():
    spec = MlpSpec(3, (), (), 3)
    zero = GaussianPolicy(zeros_mlp(spec), np.zeros(3))
    assert np.array_equal(dist(zero, [1.0, 2.0, 3.0]).mean, np.zeros(3))
    ident = GaussianPolicy(unflatten(spec, np.concatenate([np.eye(3).ravel(), np.zeros(3)])), np.zeros(3))
    s = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(dist(ident, s).mean, s)
    p = tiny_policy(0)
    assert np.array_equal(dist(p, [0.1, 0.2]).mean, mlp_forward(p.mean_net, [0.1, 0.2]))
    with pytest.raises(ShapeError):
        dist(p, [0.1, 0.2, 0.3])


def test_sample_action_vanishing_noise_and_determinism():
    head = GaussianHead(np.array([0.3, -0.7]), np.full(2, -20.0))
    assert np.allclose(sample_action(head, np.random.default_rng(0)), head.mean, atol=1e-7)
    head = GaussianHead(np.zeros(2), np.zeros(2))
    a = sample_action(head, np.random.default_rng(42))
    b = sample_action(head, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_sample_action_moments():
    head = GaussianHead(np.zeros(100_000), np.zeros(100_000))
    draws = sample_action(head, np.random.default_rng(3))
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 1.0) < 0.02


def test_log_prob_values():
    mode = -0.5 * np.log(2 * np.pi)
    assert log_prob(GaussianHead(np.array([0.0]), np.array([0.0])), np.array([0.0])) == pytest.approx(-0.9189385, abs=1e-7)
    assert log_prob(GaussianHead(np.array([2.0]), np.array([0.0])), np.array([3.0])) == pytest.approx(mode - 0.5, abs=1e-15)
    head = GaussianHead(np.array([0.2, -1.0]), np.array([0.3, -0.4]))
    a = np.array([0.5, 0.1])
    parts = sum(log_prob(GaussianHead(head.mean[i:i + 1], head.log_std[i:i + 1]), a[i:i + 1]) for i in range(2))
    assert log_prob(head, a) == pytest.approx(parts, abs=1e-14)
    expected = stats.norm.logpdf(a, head.mean, np.exp(head.log_std)).sum()
    assert log_prob(head, a) == pytest.approx(expected, abs=1e-12)


def test_grad_log_prob_at_mode():
    p = tiny_policy(1)
    s = np.array([0.4, -0.2])
    g = grad_log_prob(p, s, dist(p, s).mean)
    assert not np.any(g[:p.n_mean_params])
    assert np.array_equal(g[p.n_mean_params:], -np.ones(2))


def test_grad_log_prob_matches_fd_three_params():
    # 1-D linear mean head: w, b, plus one log-std
    spec = MlpSpec(1, (), (), 1)
    p = GaussianPolicy(unflatten(spec, [0.7, -0.2]), np.array([0.1]))
    assert p.n_params == 3
    s, a = np.array([1.3]), np.array([0.4])
    fd = finite_diff_grad(lambda v: log_prob(dist(p.with_params(v), s), a), p.params(), 1e-5)
    g = grad_log_prob(p, s, a)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


def test_grad_log_prob_odd_even_symmetry():
    p = tiny_policy(2)
    s = np.array([0.3, 0.9])
    mu = dist(p, s).mean
    d = np.array([0.4, -0.8])
    g_plus, g_minus = grad_log_prob(p, s, mu + d), grad_log_prob(p, s, mu - d)
    n = p.n_mean_params
    assert np.allclose(g_plus[:n], -g_minus[:n], rtol=0, atol=1e-14)
    assert np.allclose(g_plus[n:], g_minus[n:], rtol=0, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_grad_log_prob_matches_fd_random(seed):
    p = tiny_policy(seed, hidden=(4, 3), acts=("tanh", "identity"))
    rng = np.random.default_rng(seed + 1)
    s, a = rng.normal(size=2), rng.normal(size=2)
    fd = finite_diff_grad(lambda v: log_prob(dist(p.with_params(v), s), a), p.params(), 1e-5)
    g = grad_log_prob(p, s, a)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


def test_score_mean_zero_under_own_samples():
    p = tiny_policy(3)
    s = np.array([0.2, -0.4])
    rng = np.random.default_rng(0)
    norms = {}
    for n in (400, 6400):
        acts = np.stack([sample_action(dist(p, s), rng) for _ in range(n)])
        g = score_dot(p, np.repeat(s[None], n, axis=0), acts, np.full(n, 1.0 / n))
        norms[n] = np.linalg.norm(g)
    # 16x samples -> ~4x smaller; allow slack for Monte-Carlo noise
    assert norms[6400] < norms[400] / 2


def test_mean_kl_closed_forms():
    p = tiny_policy(4)
    states = np.random.default_rng(0).normal(size=(7, 2))
    assert mean_kl(p, p, states) == 0.0
    spec = MlpSpec(1, (), (), 1)
    a = GaussianPolicy(unflatten(spec, [0.0, 0.0]), np.zeros(1))
    b = GaussianPolicy(unflatten(spec, [0.0, 0.75]), np.zeros(1))
    assert mean_kl(a, b, np.array([[1.0], [2.0]])) == pytest.approx(0.75**2 / 2, abs=1e-15)
    with pytest.raises(ContractError):
        mean_kl(p, p, np.empty((0, 2)))


def test_mean_kl_matches_quadrature():
    spec = MlpSpec(1, (), (), 1)
    old = GaussianPolicy(unflatten(spec, [0.3, -0.1]), np.array([0.2]))
    new = GaussianPolicy(unflatten(spec, [-0.5, 0.4]), np.array([-0.3]))
    states = np.array([[0.5], [-1.0], [2.0]])
    kls = []
    for s in states:
        h1, h2 = dist(old, s), dist(new, s)
        m1, s1 = h1.mean[0], np.exp(h1.log_std[0])
        m2, s2 = h2.mean[0], np.exp(h2.log_std[0])
        f = lambda x: stats.norm.pdf(x, m1, s1) * (stats.norm.logpdf(x, m1, s1) - stats.norm.logpdf(x, m2, s2))
        kls.append(integrate.quad(f, m1 - 15 * s1, m1 + 15 * s1, epsabs=1e-12)[0])
    assert mean_kl(old, new, states) == pytest.approx(np.mean(kls), abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_mean_kl_nonnegative(seed):
    a, b = tiny_policy(seed), tiny_policy(seed + 1)
    states = np.random.default_rng(seed).normal(size=(5, 2))
    assert mean_kl(a, b, states) >= 0


def test_fvp_zero_vector():
    p = tiny_policy(5)
    states = np.random.default_rng(0).normal(size=(4, 2))
    assert not np.any(fisher_vector_product(p, states, np.zeros(p.n_params)))


def test_fvp_linear_policy_by_hand():
    # mu = w s + b, 1-D: per-state mean block [s^2, s; s, 1] / sigma^2, log-std entry 2
    spec = MlpSpec(1, (), (), 1)
    log_std = 0.25
    p = GaussianPolicy(unflatten(spec, [0.4, -0.3]), np.array([log_std]))
    states = np.array([[0.5], [2.0], [-1.0]])
    s = states[:, 0]
    inv_var = np.exp(-2 * log_std)
    F = np.zeros((3, 3))
    F[0, 0] = np.mean(s * s) * inv_var
    F[0, 1] = F[1, 0] = np.mean(s) * inv_var
    F[1, 1] = inv_var
    F[2, 2] = 2.0
    v = np.array([1.0, -2.0, 0.5])
    assert np.allclose(fisher_vector_product(p, states, v, damping=1.0), (F + np.eye(3)) @ v, rtol=0, atol=1e-14)


def test_log_std_fisher_entry_is_two_by_quadrature():
    # E[(z^2 - 1)^2] for z ~ N(0, 1), via Gauss-Hermite (probabilists') quadrature
    x, w = np.polynomial.hermite_e.hermegauss(20)
    assert np.dot(w, (x**2 - 1) ** 2) / np.sqrt(2 * np.pi) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_fvp_matches_explicit_fisher(seed):
    p = tiny_policy(seed, obs_dim=3, hidden=(4,), action_dim=2)
    assert p.n_params <= 50
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(6, 3))
    F = explicit_fisher(p, states)
    v = rng.normal(size=p.n_params)
    assert np.allclose(fisher_vector_product(p, states, v, 0.0), F @ v, rtol=0, atol=1e-8)
    assert np.allclose(fisher_vector_product(p, states, v, 0.1), (F + 0.1 * np.eye(p.n_params)) @ v,
                       rtol=0, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_fvp_symmetric_psd(seed):
    p = tiny_policy(seed)
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(5, 2))
    u, v = rng.normal(size=(2, p.n_params))
    Fu = fisher_vector_product(p, states, u)
    Fv = fisher_vector_product(p, states, v)
    assert abs(u @ Fv - v @ Fu) < 1e-10 * max(1.0, abs(u @ Fv))
    assert v @ Fv >= -1e-12
    assert v @ fisher_vector_product(p, states, v, 0.1) > 0
