"""Small feed-forward networks with hand-written backprop and Adam.

Everything is float64. ``forward`` accepts either a single input vector or a
batch of row vectors; ``backward`` returns parameter gradients summed over the
batch together with the gradient with respect to the inputs, which is what
lets a policy be trained through a frozen discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import atomic_write_text

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(
                    f"layer {k}: weight {w.shape} / bias {b.shape}, expected {expected} / ({expected[0]},)"
                )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class GradBundle:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray

    @property
    def param_grads(self) -> list[np.ndarray]:
        out = []
        for gw, gb in zip(self.weight_grads, self.bias_grads):
            out.extend((gw, gb))
        return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer, batch-major
    outputs: list[np.ndarray]  # post-activation of each layer
    batched: bool


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AdamState":
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def init_mlp(
    layer_sizes,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    seed: int = 0,
) -> Mlp:
    """Gaussian weights with variance 1/fan_in, zero biases."""
    layer_sizes = [int(n) for n in layer_sizes]
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(n < 1 for n in layer_sizes):
        raise ValueError(f"layer widths must be >= 1, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(layer_sizes, weights, biases, hidden_activation, output_activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(out: np.ndarray, kind: str) -> np.ndarray | None:
    # derivative expressed through the post-activation value; None means identity
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "relu":
        return (out > 0.0).astype(out.dtype)
    return None


def forward(mlp: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != mlp.in_dim:
        raise ValueError(f"input has shape {x.shape}, network expects width {mlp.in_dim}")
    inputs, outputs = [], []
    last = mlp.n_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        h = _activate(h @ w.T + b, mlp.output_activation if k == last else mlp.hidden_activation)
        outputs.append(h)
    out = h if batched else h[0]
    return out, ForwardCache(inputs, outputs, batched)


def backward(mlp: Mlp, cache: ForwardCache, output_grad) -> GradBundle:
    """Gradients of ``sum(output * output_grad)`` (summed over the batch)."""
    if len(cache.inputs) != mlp.n_layers:
        raise ValueError("cache was produced by a network with a different depth")
    g = np.asarray(output_grad, dtype=np.float64)
    if not cache.batched:
        g = g.reshape(1, -1)
    if g.shape != cache.outputs[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {cache.outputs[-1].shape}")
    weight_grads = [None] * mlp.n_layers
    bias_grads = [None] * mlp.n_layers
    last = mlp.n_layers - 1
    for k in range(last, -1, -1):
        kind = mlp.output_activation if k == last else mlp.hidden_activation
        d = _activation_grad(cache.outputs[k], kind)
        if d is not None:
            g = g * d
        h_in = cache.inputs[k]
        if h_in.shape[1] != mlp.weights[k].shape[1]:
            raise ValueError(f"cache layer {k} does not match network shape")
        weight_grads[k] = g.T @ h_in
        bias_grads[k] = g.sum(axis=0)
        g = g @ mlp.weights[k]
    input_grad = g if cache.batched else g[0]
    return GradBundle(weight_grads, bias_grads, input_grad)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """Bias-corrected Adam, minimizing. Updates ``params`` and ``state`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and optimizer state disagree in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient in tensor {i} at optimizer step {state.step_count + 1}"
            )
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


def finite_diff_check(mlp: Mlp, x, eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients of sum(output).

    Covers every parameter and every input coordinate. The denominator is
    ``max(|analytic|, |numeric|, floor)`` so components that are zero up to
    rounding do not blow up the ratio.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64).copy()
    out, cache = forward(mlp, x)
    grads = backward(mlp, cache, np.ones_like(out))

    def total() -> float:
        return float(np.sum(forward(mlp, x)[0]))

    worst = 0.0

    def compare(analytic, arr):
        nonlocal worst
        flat = arr.reshape(-1)
        for i, a in enumerate(analytic.reshape(-1)):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = total()
            flat[i] = orig - eps
            f_minus = total()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)

    for p, g in zip(mlp.params(), grads.param_grads):
        compare(g, p)
    compare(grads.input_grad, x)
    return worst


def save_mlp(mlp: Mlp, path) -> None:
    lines = [
        "mlp "
        + " ".join(str(n) for n in mlp.layer_sizes)
        + f" {mlp.hidden_activation} {mlp.output_activation}"
    ]
    for p in mlp.params():
        lines.append(" ".join(repr(float(v)) for v in p.reshape(-1)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_mlp(path) -> Mlp:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty checkpoint")
    head = text[0].split()
    if len(head) < 5 or head[0] != "mlp":
        raise ValueError(f"{path}:1: bad checkpoint header {text[0]!r}")
    try:
        sizes = [int(t) for t in head[1:-2]]
    except ValueError as exc:
        raise ValueError(f"{path}:1: bad layer size ({exc})") from None
    hidden, output = head[-2], head[-1]
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes.extend([(fan_out, fan_in), (fan_out,)])
    body = text[1:]
    if len(body) != len(shapes):
        raise ValueError(f"{path}: expected {len(shapes)} parameter lines, found {len(body)}")
    arrays = []
    for lineno, (line, shape) in enumerate(zip(body, shapes), start=2):
        try:
            vals = np.array([float(t) for t in line.split()], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"{path}:{lineno}: expected {int(np.prod(shape))} values, got {vals.size}")
        arrays.append(vals.reshape(shape))
    return Mlp(sizes, arrays[0::2], arrays[1::2], hidden, output)
