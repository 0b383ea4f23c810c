"""Dense numeric building blocks: a small numpy MLP with exact backprop and
forward-mode tangents, flat parameter vectors, ADAM, and a central
finite-difference gradient used as a test oracle.

Weights are stored as ``(out, in)`` matrices.  Every forward/backward routine
accepts either a single input vector or a 2-D batch with one row per sample;
for batches, parameter gradients are summed over the rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.activations) != len(self.hidden_sizes):
            raise ShapeError("activations must have one entry per hidden layer")
        bad = [a for a in self.activations if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activation(s) {bad}; expected one of {ACTIVATIONS}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ShapeError("layer sizes must be positive")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        sizes = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def layer_activations(self) -> tuple[str, ...]:
        # the output layer is always linear
        return (*self.activations, "identity")

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes)


@dataclass
class MlpState:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        shapes = self.spec.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeError("layer count does not match spec")
        for (o, i), w, b in zip(shapes, self.weights, self.biases):
            if w.shape != (o, i) or b.shape != (o,):
                raise ShapeError(f"expected layer ({o}, {i}), got W{w.shape} b{b.shape}")

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts).astype(np.float64)

    def with_params(self, values) -> "MlpState":
        return unflatten(self.spec, values)


def unflatten(spec: MlpSpec, values) -> MlpState:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (spec.n_params,):
        raise ShapeError(f"expected {spec.n_params} parameters, got shape {values.shape}")
    weights, biases, pos = [], [], 0
    for o, i in spec.layer_shapes:
        weights.append(values[pos:pos + o * i].reshape(o, i).copy())
        pos += o * i
        biases.append(values[pos:pos + o].copy())
        pos += o
    return MlpState(spec, weights, biases)


def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> MlpState:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for o, i in spec.layer_shapes:
        limit = np.sqrt(6.0 / (i + o))
        weights.append(rng.uniform(-limit, limit, size=(o, i)))
        biases.append(np.zeros(o))
    return MlpState(spec, weights, biases)


def zeros_mlp(spec: MlpSpec) -> MlpState:
    return unflatten(spec, np.zeros(spec.n_params))


def _as_batch(net: MlpState, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ShapeError(f"input must have trailing dimension {net.spec.input_dim}, got {x.shape}")
    return x, single


def _act(name, z):
    return np.tanh(z) if name == "tanh" else z


def _chain(name, h, upstream):
    """Multiply ``upstream`` by the activation derivative, expressed via the output ``h``."""
    return upstream * (1.0 - h * h) if name == "tanh" else upstream


def _forward_cache(net: MlpState, x: np.ndarray) -> list[np.ndarray]:
    hs = [x]
    for w, b, a in zip(net.weights, net.biases, net.spec.layer_activations):
        hs.append(_act(a, hs[-1] @ w.T + b))
    return hs


def mlp_forward(net: MlpState, x) -> np.ndarray:
    xb, single = _as_batch(net, x)
    out = _forward_cache(net, xb)[-1]
    return out[0] if single else out


def mlp_backward(net: MlpState, x, output_grad) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``<mlp_forward(x), output_grad>`` w.r.t. parameters and input.

    Returns ``(param_grad, input_grad)``; for a batch the parameter gradient is
    summed over rows and ``input_grad`` keeps one row per sample.
    """
    xb, single = _as_batch(net, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (xb.shape[0], net.spec.output_dim):
        raise ShapeError(f"output_grad shape {g.shape} does not match output")
    hs = _forward_cache(net, xb)
    acts = net.spec.layer_activations
    grads_w, grads_b = [None] * len(net.weights), [None] * len(net.weights)
    delta = g
    for layer in range(len(net.weights) - 1, -1, -1):
        delta = _chain(acts[layer], hs[layer + 1], delta)
        grads_w[layer] = delta.T @ hs[layer]
        grads_b[layer] = delta.sum(axis=0)
        delta = delta @ net.weights[layer]
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    input_grad = delta[0] if single else delta
    return np.concatenate(parts), input_grad


def mlp_jvp(net: MlpState, x, param_tangent) -> np.ndarray:
    """Directional derivative of the output along a parameter-space tangent."""
    xb, single = _as_batch(net, x)
    tangent = unflatten(net.spec, param_tangent)
    h = xb
    dh = np.zeros_like(xb)
    for w, b, dw, db, a in zip(net.weights, net.biases, tangent.weights, tangent.biases,
                               net.spec.layer_activations):
        dz = dh @ w.T + h @ dw.T + db
        h = _act(a, h @ w.T + b)
        dh = _chain(a, h, dz)
    return dh[0] if single else dh


def finite_diff_grad(f: Callable[[np.ndarray], float], at, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if not h > 0:
        raise ValueError("h must be positive")
    at = np.asarray(at, dtype=np.float64)
    grad = np.empty_like(at)
    probe = at.copy()
    for i in range(at.size):
        probe[i] = at[i] + h
        fp = float(f(probe.copy()))
        probe[i] = at[i] - h
        fm = float(f(probe.copy()))
        probe[i] = at[i]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(state: AdamState, params, grad) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update.  Returns new params and a new state."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (params.shape == grad.shape == state.first_moment.shape):
        raise ShapeError("params, grad and moments must have the same length")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)
