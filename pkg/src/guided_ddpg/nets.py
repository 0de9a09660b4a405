"""Dense feedforward networks with analytic backprop, Adam, and target tracking.

Everything is float64 and functional: operations return new parameter objects
and never mutate their arguments, so snapshots can be shared freely between
the learner and evaluation code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, NumericalError, ShapeError

Array = np.ndarray

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")

CHECKPOINT_FORMAT = "mlp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpParams:
    """Weights and biases of a dense network.

    ``weights[t]`` has shape ``(layer_sizes[t+1], layer_sizes[t])`` and
    ``biases[t]`` has length ``layer_sizes[t+1]``.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[Array, ...]
    biases: tuple[Array, ...]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class MlpGrads:
    """Per-parameter gradients, shape-matching an :class:`MlpParams`."""

    weights: tuple[Array, ...]
    biases: tuple[Array, ...]


@dataclass(frozen=True)
class AdamState:
    """Moment estimates and step counter of the adaptive-moment optimizer."""

    m_weights: tuple[Array, ...]
    m_biases: tuple[Array, ...]
    v_weights: tuple[Array, ...]
    v_biases: tuple[Array, ...]
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def mlp_init(
    layer_sizes: Sequence[int],
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    seed=0,
) -> MlpParams:
    """Create a network with Glorot-uniform weights and zero biases.

    The same seed always yields bitwise-identical parameters.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"layer_sizes must have >=2 entries, all >=1, got {layer_sizes}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ConfigurationError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigurationError(f"unknown output activation {output_activation!r}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, tuple(weights), tuple(biases), hidden_activation, output_activation)


def _apply_hidden(name: str, z: Array) -> Array:
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)  # relu


def _apply_output(name: str, z: Array) -> Array:
    if name == "tanh":
        return np.tanh(z)
    return z


def _as_batch(params: MlpParams, x: Array) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"input shape {np.shape(x)} incompatible with input_dim {params.input_dim}")
    return x, single


def _forward_cached(params: MlpParams, x: Array) -> list[Array]:
    """Return the list of layer activations, ``[input, h1, ..., output]``."""
    acts = [x]
    h = x
    last = params.n_layers - 1
    for t, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = _apply_output(params.output_activation, z) if t == last else _apply_hidden(params.hidden_activation, z)
        acts.append(h)
    return acts


def mlp_forward(params: MlpParams, x: Array) -> Array:
    """Evaluate the network on a vector or a batch of row vectors."""
    xb, single = _as_batch(params, x)
    out = _forward_cached(params, xb)[-1]
    return out[0] if single else out


def mlp_forward_cached(params: MlpParams, x: Array) -> tuple[Array, list[Array]]:
    """Batched forward pass that also returns the layer activations.

    The cache can be handed to :func:`mlp_backward` to skip its internal
    forward pass when the same (params, input) pair is differentiated.
    """
    xb, _ = _as_batch(params, x)
    acts = _forward_cached(params, xb)
    return acts[-1], acts


def mlp_backward(
    params: MlpParams, x: Array, output_gradient: Array, activations: list[Array] | None = None
) -> tuple[MlpGrads, Array]:
    """Backpropagate ``output_gradient`` through the network.

    Returns gradients of a scalar loss whose gradient at the network output
    is ``output_gradient``, with respect to every parameter and to the input.
    For batched inputs the parameter gradients are summed over rows; the
    input gradient keeps one row per sample.
    """
    xb, single = _as_batch(params, x)
    g = np.asarray(output_gradient, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (xb.shape[0], params.output_dim):
        raise ShapeError(f"output_gradient shape {np.shape(output_gradient)} does not match output dim {params.output_dim}")

    acts = _forward_cached(params, xb) if activations is None else activations
    d_weights: list[Array] = [None] * params.n_layers  # type: ignore[list-item]
    d_biases: list[Array] = [None] * params.n_layers  # type: ignore[list-item]
    last = params.n_layers - 1

    delta = g
    for t in range(last, -1, -1):
        a_out = acts[t + 1]
        if t == last:
            if params.output_activation == "tanh":
                delta = delta * (1.0 - a_out * a_out)
        else:
            if params.hidden_activation == "tanh":
                delta = delta * (1.0 - a_out * a_out)
            else:
                delta = delta * (a_out > 0.0)
        d_weights[t] = delta.T @ acts[t]
        d_biases[t] = delta.sum(axis=0)
        delta = delta @ params.weights[t]

    grads = MlpGrads(tuple(d_weights), tuple(d_biases))
    input_grad = delta[0] if single else delta
    return grads, input_grad


def adam_init(params: MlpParams, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    if learning_rate <= 0.0:
        raise ConfigurationError(f"learning_rate must be positive, got {learning_rate}")
    if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
        raise ConfigurationError("moment decay rates must lie in (0, 1)")
    zeros_w = tuple(np.zeros_like(w) for w in params.weights)
    zeros_b = tuple(np.zeros_like(b) for b in params.biases)
    return AdamState(zeros_w, zeros_b, tuple(np.zeros_like(w) for w in params.weights), tuple(np.zeros_like(b) for b in params.biases), 0, float(learning_rate), beta1, beta2, epsilon)


def adam_step(state: AdamState, params: MlpParams, grads: MlpGrads) -> tuple[MlpParams, AdamState]:
    """One bias-corrected adaptive-moment update. Raises on non-finite gradients."""
    # a non-finite entry anywhere poisons the sum of sums
    total = sum(float(g.sum()) for g in grads.weights) + sum(float(g.sum()) for g in grads.biases)
    if not np.isfinite(total):
        raise NumericalError("non-finite gradient passed to adam_step")

    t = state.step_count + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.epsilon, state.learning_rate
    scale1 = lr / (1.0 - b1**t)
    inv_sqrt_corr2 = 1.0 / np.sqrt(1.0 - b2**t)

    def updated(p, g, m, v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        return p - scale1 * m / (np.sqrt(v) * inv_sqrt_corr2 + eps), m, v

    w_res = [updated(p, g, m, v) for p, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights)]
    b_res = [updated(p, g, m, v) for p, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases)]

    new_params = MlpParams(params.layer_sizes, tuple(r[0] for r in w_res), tuple(r[0] for r in b_res),
                           params.hidden_activation, params.output_activation)
    new_state = AdamState(tuple(r[1] for r in w_res), tuple(r[1] for r in b_res),
                          tuple(r[2] for r in w_res), tuple(r[2] for r in b_res),
                          t, lr, b1, b2, eps)
    return new_params, new_state


def soft_update(target: MlpParams, source: MlpParams, rate: float) -> MlpParams:
    """Blend ``rate * source + (1 - rate) * target``, elementwise."""
    if not (0.0 < rate <= 1.0):
        raise ConfigurationError(f"soft-update rate must lie in (0, 1], got {rate}")
    if target.layer_sizes != source.layer_sizes:
        raise ShapeError("target and source networks have different layer sizes")
    new_w = tuple(rate * ws + (1.0 - rate) * wt for wt, ws in zip(target.weights, source.weights))
    new_b = tuple(rate * bs + (1.0 - rate) * bt for bt, bs in zip(target.biases, source.biases))
    return replace(target, weights=new_w, biases=new_b)


def add_grads(a: MlpGrads, b: MlpGrads) -> MlpGrads:
    return MlpGrads(
        tuple(x + y for x, y in zip(a.weights, b.weights)),
        tuple(x + y for x, y in zip(a.biases, b.biases)),
    )


def scale_grads(a: MlpGrads, factor: float) -> MlpGrads:
    return MlpGrads(tuple(factor * x for x in a.weights), tuple(factor * x for x in a.biases))


def params_to_vector(params: MlpParams) -> Array:
    """Flatten all parameters (weights row-major, then biases, layer by layer)."""
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def vector_to_params(params: MlpParams, vec: Array) -> MlpParams:
    """Inverse of :func:`params_to_vector`, using ``params`` for shapes."""
    vec = np.asarray(vec, dtype=np.float64)
    new_w, new_b = [], []
    i = 0
    for w, b in zip(params.weights, params.biases):
        new_w.append(vec[i : i + w.size].reshape(w.shape).copy())
        i += w.size
        new_b.append(vec[i : i + b.size].copy())
        i += b.size
    if i != vec.size:
        raise ShapeError(f"vector of length {vec.size} does not match parameter count {i}")
    return replace(params, weights=tuple(new_w), biases=tuple(new_b))


def grads_to_vector(grads: MlpGrads) -> Array:
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def mlp_to_dict(params: MlpParams) -> dict:
    return {
        "layer_sizes": list(params.layer_sizes),
        "hidden_activation": params.hidden_activation,
        "output_activation": params.output_activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def mlp_from_dict(d: dict) -> MlpParams:
    sizes = tuple(int(s) for s in d["layer_sizes"])
    weights = tuple(np.asarray(w, dtype=np.float64) for w in d["weights"])
    biases = tuple(np.asarray(b, dtype=np.float64) for b in d["biases"])
    for t, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[t + 1], sizes[t]) or b.shape != (sizes[t + 1],):
            raise ShapeError(f"layer {t} arrays do not match layer_sizes {sizes}")
    return MlpParams(sizes, weights, biases, d["hidden_activation"], d["output_activation"])


def save_mlp(params: MlpParams, path) -> None:
    """Write a versioned JSON checkpoint; float64 values round-trip bit-exactly."""
    payload = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION}
    payload.update(mlp_to_dict(params))
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_mlp(path) -> MlpParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unrecognized checkpoint header in {path}")
    return mlp_from_dict(payload)
