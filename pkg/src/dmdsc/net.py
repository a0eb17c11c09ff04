"""Fully connected embedding network with hand-written backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dmdsc.errors import DimensionError, ValidationError

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    embed_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.embed_dim)
        if any(int(d) != d or d < 1 for d in dims):
            raise ValidationError(f"all layer sizes must be positive integers, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.embed_dim)


@dataclass(eq=False)
class NetParams:
    """Per-layer ``weights[l]`` of shape (out, in) and ``biases[l]`` of shape (out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def shapes(self):
        return tuple(w.shape for w in self.weights)

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]``; shares memory with this object."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays):
        return cls(list(arrays[0::2]), list(arrays[1::2]))

    def copy(self):
        return NetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return NetParams(
            [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases]
        )


@dataclass(eq=False)
class Tape:
    """What ``backward`` needs from a forward pass."""

    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    shapes: tuple
    activation: str = "relu"
    batch_size: int = field(init=False)

    def __post_init__(self):
        self.batch_size = len(self.layer_inputs[0])


def init(config):
    """He-scaled normal weights from a PCG64 stream seeded by ``config.seed``; zero biases."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(params, inputs, activation="relu"):
    """Embed a (B, input_dim) batch. Hidden layers use ``activation``; the last is linear."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    in_dim = params.weights[0].shape[1]
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise DimensionError(f"expected inputs of shape (B, {in_dim}), got {x.shape}")
    layer_inputs, pre = [], []
    h = x
    last = params.num_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        layer_inputs.append(h)
        z = h @ w.T + b
        if l < last:
            pre.append(z)
            h = _act(z, activation)
        else:
            h = z
    return h, Tape(layer_inputs, pre, params.shapes, activation)


def backward(params, tape, feature_grads):
    """Parameter gradients given dL/d(features) for the batch recorded in ``tape``."""
    if tape.shapes != params.shapes:
        raise ValidationError("tape was recorded with a different network architecture")
    g = np.asarray(feature_grads, dtype=np.float64)
    out_dim = params.weights[-1].shape[0]
    if g.shape != (tape.batch_size, out_dim):
        raise DimensionError(
            f"feature_grads shape {g.shape} != ({tape.batch_size}, {out_dim}) from the tape"
        )
    n = params.num_layers
    grad_w = [None] * n
    grad_b = [None] * n
    for l in range(n - 1, -1, -1):
        grad_w[l] = g.T @ tape.layer_inputs[l]
        grad_b[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l]) * _act_grad(tape.pre_activations[l - 1], tape.activation)
    return NetParams(grad_w, grad_b)


def embed(params, inputs, activation="relu", batch_size=4096):
    """Forward pass without a tape, chunked for large inputs."""
    x = np.asarray(inputs, dtype=np.float64)
    out = [forward(params, x[i : i + batch_size], activation)[0] for i in range(0, len(x), batch_size)]
    if not out:
        return np.zeros((0, params.weights[-1].shape[0]))
    return np.concatenate(out)
