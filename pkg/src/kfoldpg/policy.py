"""Diagonal-Gaussian policy with an MLP mean head and a state-independent
log-std vector.

Parameter layout of the flat vector: mean-net parameters first (see
``MlpState.flatten``), then the ``action_dim`` log-std entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .numkit import MlpSpec, MlpState, init_mlp, mlp_backward, mlp_forward, mlp_jvp, unflatten

LOG_2PI = np.log(2.0 * np.pi)

POLICY_HIDDEN = (100, 50, 25)
POLICY_ACTIVATIONS = ("tanh", "tanh", "identity")


@dataclass(frozen=True)
class GaussianHead:
    mean: np.ndarray
    log_std: np.ndarray


@dataclass
class GaussianPolicy:
    mean_net: MlpState
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != (self.mean_net.spec.output_dim,):
            raise ShapeError("log_std length must equal the mean head output dimension")

    @property
    def obs_dim(self) -> int:
        return self.mean_net.spec.input_dim

    @property
    def action_dim(self) -> int:
        return self.mean_net.spec.output_dim

    @property
    def n_params(self) -> int:
        return self.mean_net.n_params + self.action_dim

    @property
    def n_mean_params(self) -> int:
        return self.mean_net.n_params

    def params(self) -> np.ndarray:
        return np.concatenate([self.mean_net.flatten(), self.log_std])

    def with_params(self, values) -> "GaussianPolicy":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {values.shape}")
        n = self.n_mean_params
        return GaussianPolicy(unflatten(self.mean_net.spec, values[:n]), values[n:].copy())


def make_policy(obs_dim: int, action_dim: int, rng: np.random.Generator,
                hidden_sizes: Sequence[int] = POLICY_HIDDEN,
                activations: Sequence[str] = POLICY_ACTIVATIONS,
                init_log_std: float = 0.0) -> GaussianPolicy:
    spec = MlpSpec(obs_dim, tuple(hidden_sizes), tuple(activations), action_dim)
    return GaussianPolicy(init_mlp(spec, rng), np.full(action_dim, float(init_log_std)))


def dist(policy: GaussianPolicy, state) -> GaussianHead:
    """Action distribution at ``state`` (or at each row of a state batch)."""
    return GaussianHead(mlp_forward(policy.mean_net, state), policy.log_std.copy())


def sample_action(head: GaussianHead, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(np.shape(head.mean))
    return head.mean + np.exp(head.log_std) * noise


def log_prob(head: GaussianHead, action):
    """Log-density; returns a float for a single action, an array for a batch."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != np.shape(head.mean):
        raise ShapeError(f"action shape {action.shape} does not match mean {np.shape(head.mean)}")
    z = (action - head.mean) * np.exp(-head.log_std)
    terms = -0.5 * LOG_2PI - head.log_std - 0.5 * z * z
    out = terms.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _check_batch(policy: GaussianPolicy, states, actions):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if states.shape[1] != policy.obs_dim or actions.shape != (states.shape[0], policy.action_dim):
        raise ShapeError(f"states {states.shape} / actions {actions.shape} do not match policy")
    return states, actions


def score_dot(policy: GaussianPolicy, states, actions, weights) -> np.ndarray:
    """``sum_t weights[t] * grad_theta log pi(actions[t] | states[t])`` in one pass."""
    states, actions = _check_batch(policy, states, actions)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape != (states.shape[0],):
        raise ShapeError("one weight per state is required")
    mean = mlp_forward(policy.mean_net, states)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = actions - mean
    mean_grad, _ = mlp_backward(policy.mean_net, states, weights[:, None] * diff * inv_var)
    log_std_grad = weights @ (diff * diff * inv_var - 1.0)
    return np.concatenate([mean_grad, log_std_grad])


def grad_log_prob(policy: GaussianPolicy, state, action) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if state.shape != (policy.obs_dim,) or action.shape != (policy.action_dim,):
        raise ShapeError("grad_log_prob takes a single state and action")
    return score_dot(policy, state[None], action[None], np.ones(1))


def mean_kl(policy_old: GaussianPolicy, policy_new: GaussianPolicy, states) -> float:
    """Average of KL(old || new) over the given states."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[0] == 0:
        raise ContractError("mean_kl needs at least one state")
    if policy_old.obs_dim != policy_new.obs_dim or policy_old.action_dim != policy_new.action_dim:
        raise ShapeError("policies have different dimensions")
    mu1 = mlp_forward(policy_old.mean_net, states)
    mu2 = mlp_forward(policy_new.mean_net, states)
    ls1, ls2 = policy_old.log_std, policy_new.log_std
    var_ratio = np.exp(2.0 * (ls1 - ls2))
    per_dim = (ls2 - ls1) + 0.5 * var_ratio + 0.5 * (mu1 - mu2) ** 2 * np.exp(-2.0 * ls2) - 0.5
    return float(per_dim.sum(axis=1).mean())


def fisher_vector_product(policy: GaussianPolicy, states, v, damping: float = 0.0) -> np.ndarray:
    """``(F + damping * I) v`` with F the state-averaged Gaussian Fisher matrix.

    Mean block: ``J^T diag(1/sigma^2) J`` per state, via one forward tangent and
    one backward pass over the whole batch.  Log-std block: ``2 I``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (policy.n_params,):
        raise ShapeError(f"vector length {v.shape} does not match {policy.n_params} params")
    if damping < 0:
        raise ContractError("damping must be non-negative")
    n = policy.n_mean_params
    jv = mlp_jvp(policy.mean_net, states, v[:n])
    weighted = jv * np.exp(-2.0 * policy.log_std) / states.shape[0]
    mean_part, _ = mlp_backward(policy.mean_net, states, weighted)
    return np.concatenate([mean_part, 2.0 * v[n:]]) + damping * v
