"""Dense multilayer perceptrons with hand-rolled backpropagation.

Everything runs in 64-bit numpy. Networks are plain value objects: a list of
weight matrices (shape ``(fan_in, fan_out)``) and bias vectors, rectifier
hidden layers, and a linear or tanh output head. Besides parameter gradients,
the module exposes gradients with respect to the *input* vector, which the
search-control machinery uses to climb value surfaces.

Conventions:
  - the rectifier subgradient at exactly 0 is 0;
  - ``forward`` accepts a single vector ``(d,)`` or a batch ``(n, d)``;
  - batched ``param_gradient`` sums per-sample gradients (callers bake any
    1/n factor into ``output_grad``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NonFiniteError

OUTPUT_ACTIVATIONS = ("linear", "tanh")


@dataclass
class MLP:
    """Feed-forward network parameters.

    ``weights[i]`` maps layer ``i`` activations to layer ``i+1``
    pre-activations via ``h @ W + b``. Hidden layers are ReLU; the output
    layer is linear (value heads) or tanh (actors).
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "linear"

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MLP":
        return MLP(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
        )

    def copy_from(self, other: "MLP") -> None:
        """Overwrite parameters in place (target-network sync)."""
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob


@dataclass
class Gradients:
    """Parameter gradients with the same shapes as the network."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_xavier(
    layer_sizes: list[int],
    output_uniform_half_width: float,
    rng: np.random.Generator,
    output_activation: str = "linear",
) -> MLP:
    """Glorot-uniform hidden layers; output layer uniform in ±half_width.

    Hidden weights are drawn from U[-a, a] with a = sqrt(6 / (fan_in +
    fan_out)) (entry variance 2 / (fan_in + fan_out)); hidden biases start at
    zero. Output-layer weights *and* biases are uniform in the given
    half-width, which keeps initial outputs near zero.
    """
    if len(layer_sizes) < 2:
        raise ConfigurationError(f"need at least input and output layers, got {layer_sizes}")
    if any(int(n) <= 0 for n in layer_sizes):
        raise ConfigurationError(f"layer sizes must be positive, got {layer_sizes}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigurationError(f"unknown output activation {output_activation!r}")
    if output_uniform_half_width < 0:
        raise ConfigurationError("output_uniform_half_width must be >= 0")

    sizes = [int(n) for n in layer_sizes]
    weights, biases = [], []
    last = len(sizes) - 2
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == last:
            hw = output_uniform_half_width
            weights.append(rng.uniform(-hw, hw, size=(n_in, n_out)))
            biases.append(rng.uniform(-hw, hw, size=n_out))
        else:
            a = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-a, a, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
    return MLP(sizes, weights, biases, output_activation)


def _as_batch(net: MLP, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != network input dim {net.input_dim}")
    return x, single


def _forward_cache(net: MLP, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (output, activations); activations[i] is the input to layer i."""
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
            acts.append(h)
    if net.output_activation == "tanh":
        h = np.tanh(h)
    return h, acts


def forward(net: MLP, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; pure, shape (d,) -> (k,) or (n, d) -> (n, k)."""
    xb, single = _as_batch(net, x)
    y, _ = _forward_cache(net, xb)
    return y[0] if single else y


def _output_delta(net: MLP, y: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    if net.output_activation == "tanh":
        return output_grad * (1.0 - y * y)
    return output_grad


def _backward_params(net: MLP, acts: list[np.ndarray], delta: np.ndarray) -> Gradients:
    n_layers = len(net.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            # acts[i] > 0 is exactly the rectifier mask (0 at the kink).
            delta = (delta @ net.weights[i].T) * (acts[i] > 0)
    return Gradients(gw, gb)


def param_gradient(net: MLP, x: np.ndarray, output_grad: np.ndarray) -> Gradients:
    """Backpropagate d(loss)/d(output) to all parameters.

    ``output_grad`` is the loss gradient at the (post-activation) output,
    shaped like ``forward(net, x)``. Batched inputs sum over the batch.
    """
    xb, single = _as_batch(net, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (xb.shape[0], net.output_dim):
        raise ValueError(f"output_grad shape {g.shape} does not match ({xb.shape[0]}, {net.output_dim})")
    y, acts = _forward_cache(net, xb)
    return _backward_params(net, acts, _output_delta(net, y, g))


def input_gradient(net: MLP, x: np.ndarray, action) -> np.ndarray:
    """Gradient of output unit ``action`` with respect to the input vector.

    ``action`` is an int (shared across the batch) or an int array of
    per-row indices. Shape follows ``x``.
    """
    xb, single = _as_batch(net, x)
    y, acts = _forward_cache(net, xb)
    n = xb.shape[0]
    delta = np.zeros((n, net.output_dim))
    delta[np.arange(n), action] = 1.0
    delta = _output_delta(net, y, delta)
    for i in range(len(net.weights) - 1, 0, -1):
        delta = (delta @ net.weights[i].T) * (acts[i] > 0)
    dx = delta @ net.weights[0].T
    return dx[0] if single else dx


@dataclass
class AdamState:
    """Adam moment accumulators; shapes mirror the network."""

    learning_rate: float
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: MLP, learning_rate: float) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        m_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_weights=[np.zeros_like(w) for w in net.weights],
        v_biases=[np.zeros_like(b) for b in net.biases],
    )


def adam_step(net: MLP, state: AdamState, grads: Gradients) -> MLP:
    """One Adam update, applied to the network in place.

    The gradient is treated as the thing to *descend*; callers maximizing an
    objective pass its negation. Non-finite gradients abort immediately.
    """
    for g in grads.weights + grads.biases:
        if not np.isfinite(g).all():
            raise NonFiniteError("non-finite parameter gradient in adam_step")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    lr = state.learning_rate
    for params, grad_list, ms, vs in (
        (net.weights, grads.weights, state.m_weights, state.v_weights),
        (net.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, grad_list, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return net


# --- checkpoint serialization ------------------------------------------------
#
# Layout (little endian): magic, u8 version, u8 activation tag, u32 layer
# count, u32 layer sizes, then per layer the row-major float64 weight matrix
# followed by the bias vector.

CHECKPOINT_MAGIC = b"HCDYNA-MLP"
CHECKPOINT_VERSION = 1
_ACT_TAGS = {"linear": 0, "tanh": 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}


def save_checkpoint(net: MLP, path) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<BB", CHECKPOINT_VERSION, _ACT_TAGS[net.output_activation]))
        f.write(struct.pack("<I", len(net.layer_sizes)))
        f.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
        for w, b in zip(net.weights, net.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> MLP:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path}: not a network checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    version, act_tag = struct.unpack_from("<BB", raw, off)
    off += 2
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    if act_tag not in _TAG_ACTS:
        raise ConfigurationError(f"{path}: unknown activation tag {act_tag}")
    (n_sizes,) = struct.unpack_from("<I", raw, off)
    off += 4
    sizes = list(struct.unpack_from(f"<{n_sizes}I", raw, off))
    off += 4 * n_sizes
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=n_in * n_out, offset=off).reshape(n_in, n_out)
        off += 8 * n_in * n_out
        b = np.frombuffer(raw, dtype="<f8", count=n_out, offset=off)
        off += 8 * n_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(raw):
        raise ConfigurationError(f"{path}: trailing bytes in checkpoint")
    return MLP(sizes, weights, biases, _TAG_ACTS[act_tag])
