"""Small dense networks with hand-coded backpropagation.

Policy and value functions are plain feed-forward stacks; gradients are
computed analytically (no autodiff) and applied with an adaptive-moment
optimizer. Parameters serialize to a portable JSON checkpoint.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Input or gradient shape inconsistent with the parameter stack."""


class Activation(str, enum.Enum):
    TANH = "tanh"
    RELU = "relu"


class Head(str, enum.Enum):
    LINEAR = "linear"
    SOFTMAX = "softmax"


@dataclass
class NetworkParams:
    """Layer stack; weights[i] has shape (layer_dims[i+1], layer_dims[i])."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.TANH
    head: Head = Head.LINEAR

    def validate(self) -> None:
        dims = self.layer_dims
        if len(dims) < 2:
            raise DimensionError("need at least input and output dims")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("one weight matrix and bias vector per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionError(
                    f"layer {i}: got {w.shape}/{b.shape}, expected "
                    f"{(dims[i + 1], dims[i])}/{(dims[i + 1],)}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DimensionError(f"layer {i}: non-finite parameter")

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.layer_dims, [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.activation, self.head)

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @staticmethod
    def zeros_like(params: NetworkParams) -> "Gradients":
        return Gradients([np.zeros_like(w) for w in params.weights],
                         [np.zeros_like(b) for b in params.biases])

    def add_(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b
        return self

    def scale_(self, factor: float) -> "Gradients":
        for a in self.weights:
            a *= factor
        for a in self.biases:
            a *= factor
        return self


def init_params(
    layer_dims: tuple[int, ...] | list[int],
    activation: Activation = Activation.TANH,
    head: Head = Head.LINEAR,
    seed: int = 0,
) -> NetworkParams:
    """Uniform init scaled by fan-in + fan-out; biases start at zero."""
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    params = NetworkParams(dims, weights, biases, activation, head)
    params.validate()
    return params


def policy_network(obs_dim: int, n_actions: int, hidden: tuple[int, ...] = (64, 64),
                   seed: int = 0) -> NetworkParams:
    return init_params((obs_dim, *hidden, n_actions), Activation.TANH, Head.SOFTMAX, seed)


def value_network(obs_dim: int, out_dim: int = 1, hidden: tuple[int, ...] = (64, 64),
                  seed: int = 0) -> NetworkParams:
    return init_params((obs_dim, *hidden, out_dim), Activation.TANH, Head.LINEAR, seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-by-max exponential normalization along the last axis."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _check_input(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] != params.layer_dims[0]:
        raise DimensionError(
            f"input shape {arr.shape} incompatible with input dim {params.layer_dims[0]}")
    return arr


def _forward_pass(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns the output and post-activation values of every layer.

    activations[0] is the input; activations[-1] is the output after the head.
    """
    acts = [x]
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if i < last:
            if params.activation == Activation.TANH:
                h = np.tanh(z)
            else:
                h = np.maximum(z, 0.0)
        elif params.head == Head.SOFTMAX:
            h = softmax(z)
        else:
            h = z
        acts.append(h)
    return h, acts


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Deterministic evaluation; accepts a single vector or a batch of rows."""
    return _forward_pass(params, _check_input(params, x))[0]


def backward(params: NetworkParams, x: np.ndarray, loss_grad: np.ndarray) -> Gradients:
    """Analytic gradients of loss_grad . output with respect to all parameters.

    Batched inputs contribute a sum over rows.
    """
    arr = _check_input(params, x)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    g = np.asarray(loss_grad, dtype=float)
    if single and g.ndim == 1:
        g = g[None, :]
    _, acts = _forward_pass(params, arr)
    if g.shape != acts[-1].shape:
        raise DimensionError(
            f"loss gradient shape {g.shape} does not match output {acts[-1].shape}")

    grads = Gradients.zeros_like(params)
    out = acts[-1]
    if params.head == Head.SOFTMAX:
        # Jacobian-vector product of the normalized exponential
        delta = out * (g - np.sum(out * g, axis=-1, keepdims=True))
    else:
        delta = g.copy()
    for i in range(params.n_layers - 1, -1, -1):
        grads.weights[i][:] = delta.T @ acts[i]
        grads.biases[i][:] = delta.sum(axis=0)
        if i == 0:
            break
        upstream = delta @ params.weights[i]
        a = acts[i]
        if params.activation == Activation.TANH:
            delta = upstream * (1.0 - a * a)
        else:
            delta = upstream * (a > 0.0)
    return grads


@dataclass
class OptimizerState:
    step_count: int
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @staticmethod
    def for_params(params: NetworkParams, learning_rate: float = 3e-4,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "OptimizerState":
        return OptimizerState(
            0,
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
            learning_rate, beta1, beta2, epsilon,
        )


def optimizer_step(params: NetworkParams, grads: Gradients,
                   state: OptimizerState) -> tuple[NetworkParams, OptimizerState]:
    """One adaptive-moment descent step; updates params and state in place."""
    if len(grads.weights) != params.n_layers:
        raise DimensionError("gradient stack does not match parameter stack")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for i in range(params.n_layers):
        if grads.weights[i].shape != params.weights[i].shape:
            raise DimensionError(f"layer {i}: gradient shape mismatch")
        for p, g, m, v in ((params.weights[i], grads.weights[i],
                            state.m_weights[i], state.v_weights[i]),
                           (params.biases[i], grads.biases[i],
                            state.m_biases[i], state.v_biases[i])):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params, state


def to_json_dict(params: NetworkParams) -> dict:
    return {
        "layer_dims": list(params.layer_dims),
        "activation": params.activation.value,
        "head": params.head.value,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def from_json_dict(data: dict) -> NetworkParams:
    try:
        params = NetworkParams(
            layer_dims=tuple(int(d) for d in data["layer_dims"]),
            weights=[np.asarray(w, dtype=float) for w in data["weights"]],
            biases=[np.asarray(b, dtype=float) for b in data["biases"]],
            activation=Activation(data["activation"]),
            head=Head(data["head"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionError(f"malformed checkpoint: {exc}") from exc
    params.validate()
    return params


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json_dict(params)) + "\n")


def load_checkpoint(path: str | Path) -> NetworkParams:
    return from_json_dict(json.loads(Path(path).read_text()))
