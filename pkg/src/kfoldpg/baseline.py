"""State-value baselines.

* ``ZeroBaseline``: predicts 0 everywhere (the iteration-0 baseline).
* ``MlpBaseline``: 32-32 MLP regressor (tanh after the first hidden layer only),
  inputs and targets standardized on each fit's data, trained by a fixed number
  of ADAM minibatch steps that warm-start from the current weights.
* ``TabularBaseline``: exact memorization keyed by the state's bytes; only
  meaningful in controlled deterministic tests.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .numkit import AdamState, MlpSpec, adam_step, init_mlp, mlp_backward, mlp_forward

BASELINE_HIDDEN = (32, 32)
BASELINE_ACTIVATIONS = ("tanh", "identity")
MIN_STD = 1e-8


@dataclass(frozen=True)
class FitConfig:
    adam_steps: int = 10
    minibatch: int = 50
    learning_rate: float = 1e-2

    def __post_init__(self):
        if self.adam_steps < 1 or self.minibatch < 1:
            raise ContractError("adam_steps and minibatch must be positive")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")


def _check_fit_data(states, targets):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(targets) == 0 or states.shape[0] != len(targets):
        raise ContractError("fit needs equal-length, nonempty states and targets")
    return states, targets


class ZeroBaseline:
    kind = "zero"

    def predict(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        return np.zeros(states.shape[0]) if states.ndim == 2 else np.zeros(())

    def fit(self, states, targets, config: FitConfig = FitConfig(), rng=None):
        _check_fit_data(states, targets)
        return self

    def copy(self):
        return self


class TabularBaseline:
    kind = "tabular"

    def __init__(self):
        self.table: dict[bytes, float] = {}

    @staticmethod
    def _key(state) -> bytes:
        return np.ascontiguousarray(state, dtype=np.float64).tobytes()

    def predict(self, states):
        states = np.asarray(states, dtype=np.float64)
        rows = states if states.ndim == 2 else states[None]
        try:
            out = np.array([self.table[self._key(s)] for s in rows])
        except KeyError:
            raise KeyError("state was not seen during fit") from None
        return out if states.ndim == 2 else out[0]

    def fit(self, states, targets, config: FitConfig = FitConfig(), rng=None):
        states, targets = _check_fit_data(states, targets)
        for s, y in zip(states, targets):
            self.table[self._key(s)] = float(y)
        return self

    def copy(self):
        other = TabularBaseline()
        other.table = dict(self.table)
        return other


class MlpBaseline:
    kind = "mlp"

    def __init__(self, obs_dim: int, rng: np.random.Generator,
                 hidden_sizes=BASELINE_HIDDEN, activations=BASELINE_ACTIVATIONS):
        spec = MlpSpec(obs_dim, tuple(hidden_sizes), tuple(activations), 1)
        self.net = init_mlp(spec, rng)
        self.adam = None
        self.input_mean = np.zeros(obs_dim)
        self.input_std = np.ones(obs_dim)
        self.target_mean = 0.0
        self.target_std = 1.0

    @property
    def obs_dim(self) -> int:
        return self.net.spec.input_dim

    def _inputs(self, states):
        return (states - self.input_mean) / self.input_std

    def predict(self, states):
        states = np.asarray(states, dtype=np.float64)
        if states.shape[-1] != self.obs_dim:
            raise ShapeError(f"state dimension {states.shape[-1]} != {self.obs_dim}")
        out = mlp_forward(self.net, self._inputs(states))[..., 0]
        return out * self.target_std + self.target_mean

    def fit(self, states, targets, config: FitConfig = FitConfig(), rng=None):
        states, targets = _check_fit_data(states, targets)
        if rng is None:
            raise ContractError("MlpBaseline.fit needs an rng for minibatch sampling")
        self.input_mean = states.mean(axis=0)
        std = states.std(axis=0)
        self.input_std = np.where(std > MIN_STD, std, 1.0)
        self.target_mean = float(targets.mean())
        t_std = float(targets.std())
        self.target_std = t_std if t_std > MIN_STD else 1.0

        x = self._inputs(states)
        y = (targets - self.target_mean) / self.target_std
        n = len(y)
        params = self.net.flatten()
        if self.adam is None or self.adam.learning_rate != config.learning_rate:
            self.adam = AdamState.zeros(params.size, learning_rate=config.learning_rate)
        for _ in range(config.adam_steps):
            if n > config.minibatch:
                idx = rng.choice(n, size=config.minibatch, replace=False)
            else:
                idx = np.arange(n)
            pred = mlp_forward(self.net, x[idx])[:, 0]
            out_grad = (2.0 / len(idx)) * (pred - y[idx])
            grad, _ = mlp_backward(self.net, x[idx], out_grad[:, None])
            params, self.adam = adam_step(self.adam, params, grad)
            self.net = self.net.with_params(params)
        return self

    def copy(self):
        return copy.deepcopy(self)


def mse_loss(model, states, targets) -> float:
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    pred = np.asarray(model.predict(np.atleast_2d(states)), dtype=np.float64).reshape(-1)
    if pred.shape != targets.shape:
        raise ShapeError("states and targets have different lengths")
    return float(np.mean((pred - targets) ** 2))
