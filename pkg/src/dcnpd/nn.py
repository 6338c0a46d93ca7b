"""Dense feed-forward substrate: layers, dropout masks, Adam, gradient checking.

Everything runs in float64 on plain numpy arrays (row-major, one row per
example). Randomness always comes from an explicitly passed
``numpy.random.Generator``; there is no hidden global state.

Dropout uses the inverted convention: a kept unit's activation is scaled
by ``1/keep_prob`` so that masked and maskless passes live on the same
scale. Masks are applied to hidden activations only, never to inputs or
to an output layer (see `DropoutMask`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return stable_sigmoid(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(z: np.ndarray, a: np.ndarray, name: str) -> np.ndarray:
    # Derivative w.r.t. the pre-activation; ReLU uses the 0 subgradient at 0.
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def xavier_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Xavier initialization on [-sqrt(6/(fan_in+fan_out)), +sqrt(...)]."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan dimensions must be >= 1, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DenseLayer:
    """One affine layer ``y = f(x @ W + b)`` with activation tag ``f``."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValueError("W must be 2-D (fan_in x fan_out)")
        if self.b.shape != (self.W.shape[1],):
            raise ValueError(
                f"bias shape {self.b.shape} does not match fan_out {self.W.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.W.shape[0]

    @property
    def fan_out(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.W.copy(), self.b.copy(), self.activation)


@dataclass
class MLPParams:
    """An ordered stack of dense layers with compatible dimensions."""

    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(
                    f"layer widths incompatible: {prev.fan_out} -> {nxt.fan_in}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def hidden_widths(self) -> list[int]:
        """Widths of every layer output except the final one."""
        return [layer.fan_out for layer in self.layers[:-1]]

    def parameter_arrays(self) -> list[np.ndarray]:
        """Flat view [W1, b1, W2, b2, ...]; the arrays themselves, not copies."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.W)
            out.append(layer.b)
        return out

    def copy(self) -> "MLPParams":
        return MLPParams([layer.copy() for layer in self.layers])

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "weights": layer.W.tolist(),
                    "bias": layer.b.tolist(),
                    "activation": layer.activation,
                }
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MLPParams":
        layers = [
            DenseLayer(
                np.asarray(entry["weights"], dtype=np.float64),
                np.asarray(entry["bias"], dtype=np.float64),
                entry["activation"],
            )
            for entry in payload["layers"]
        ]
        return cls(layers)


def build_mlp(
    widths: Sequence[int],
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> MLPParams:
    """Xavier-initialized MLP with layer sizes ``widths[0] -> ... -> widths[-1]``."""
    if len(widths) < 2:
        raise ValueError("widths must list at least input and output dimensions")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        act = output_activation if i == len(widths) - 2 else hidden_activation
        layers.append(DenseLayer(xavier_init(fan_in, fan_out, rng), np.zeros(fan_out), act))
    return MLPParams(layers)


@dataclass
class DropoutMask:
    """Per-layer binary keep masks plus the keep probability they were drawn with.

    ``masks[i]`` applies to the output of layer ``i`` and is either a
    ``(width,)`` vector or a ``(batch, width)`` per-example matrix. The list
    may be shorter than the layer stack; layers past its end (typically the
    output layer) stay unmasked, and an explicit ``None`` entry skips a layer.
    ``keep_prob`` is a scalar or a per-example ``(batch,)`` vector.
    """

    masks: list[np.ndarray | None]
    keep_prob: float | np.ndarray


def bernoulli_mask(shape, keep_prob, rng: np.random.Generator) -> np.ndarray:
    """0/1 mask with entries Bernoulli(keep_prob); keep_prob=1 gives all ones."""
    keep = np.asarray(keep_prob, dtype=np.float64)
    if np.any(keep <= 0.0) or np.any(keep > 1.0):
        raise ValueError("keep_prob must lie in (0, 1]")
    return (rng.random(shape) < keep).astype(np.float64)


@dataclass
class ForwardCache:
    """Intermediates retained by `mlp_forward` for the backward pass."""

    inputs: list[np.ndarray]
    pre_acts: list[np.ndarray]
    acts: list[np.ndarray]
    scales: list[np.ndarray | None]


def _mask_scales(
    params: MLPParams, mask: DropoutMask | None, n_rows: int
) -> list[np.ndarray | None]:
    if mask is None:
        return [None] * len(params.layers)
    if len(mask.masks) > len(params.layers):
        raise ValueError("more mask vectors than layers")
    keep = np.asarray(mask.keep_prob, dtype=np.float64)
    if np.any(keep <= 0.0) or np.any(keep > 1.0):
        raise ValueError("keep_prob must lie in (0, 1]")
    if keep.ndim == 1:
        if keep.shape[0] != n_rows:
            raise ValueError("per-example keep_prob length does not match batch")
        keep = keep[:, None]
    elif keep.ndim != 0:
        raise ValueError("keep_prob must be a scalar or a 1-D per-example vector")
    scales: list[np.ndarray | None] = []
    for i, layer in enumerate(params.layers):
        m = mask.masks[i] if i < len(mask.masks) else None
        if m is None:
            scales.append(None)
            continue
        m = np.asarray(m, dtype=np.float64)
        if m.shape[-1] != layer.fan_out:
            raise ValueError(
                f"mask width {m.shape[-1]} does not match layer {i} width {layer.fan_out}"
            )
        if m.ndim == 2 and m.shape[0] != n_rows:
            raise ValueError("per-example mask rows do not match batch")
        scales.append(m / keep)
    return scales


def mlp_forward(
    params: MLPParams, x: np.ndarray, mask: DropoutMask | None = None
) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass over a batch; returns output and the backward cache.

    With a mask, each covered activation is multiplied elementwise by its
    0/1 mask and divided by ``keep_prob`` (inverted dropout), so an
    all-ones mask at keep_prob 1 reproduces the maskless output exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be 2-D (batch x features)")
    if x.shape[1] != params.input_dim:
        raise ValueError(
            f"input width {x.shape[1]} does not match network input {params.input_dim}"
        )
    scales = _mask_scales(params, mask, x.shape[0])
    inputs, pre_acts, acts = [], [], []
    h = x
    for layer, scale in zip(params.layers, scales):
        inputs.append(h)
        z = h @ layer.W + layer.b
        a = _activate(z, layer.activation)
        pre_acts.append(z)
        acts.append(a)
        h = a if scale is None else a * scale
    return h, ForwardCache(inputs, pre_acts, acts, scales)


def mlp_backward(
    params: MLPParams, cache: ForwardCache, grad_output: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate ``dloss/doutput`` through the cached forward pass.

    Returns ``(grads, grad_input)`` where ``grads[i] = (dW_i, db_i)``.
    Gradients are sums over the batch; any averaging lives in the loss
    gradient the caller supplies. Units masked out in the forward pass
    propagate exactly zero gradient.
    """
    if len(cache.inputs) != len(params.layers):
        raise ValueError("cache does not match the parameter stack")
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != (cache.inputs[0].shape[0], params.output_dim):
        raise ValueError("grad_output shape does not match the forward output")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)  # type: ignore[list-item]
    g = grad_output
    for i in reversed(range(len(params.layers))):
        layer = params.layers[i]
        if cache.inputs[i].shape[1] != layer.fan_in:
            raise ValueError("cache does not match the parameter stack")
        if cache.scales[i] is not None:
            g = g * cache.scales[i]
        gz = g * _activation_grad(cache.pre_acts[i], cache.acts[i], layer.activation)
        dW = cache.inputs[i].T @ gz
        db = gz.sum(axis=0)
        grads[i] = (dW, db)
        g = gz @ layer.W.T
    return grads, g


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """[ (dW1, db1), ... ] -> [dW1, db1, ...], matching `parameter_arrays`."""
    out: list[np.ndarray] = []
    for dW, db in grads:
        out.append(dW)
        out.append(db)
    return out


@dataclass
class AdamState:
    """Adam moment accumulators for a fixed list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(
        cls,
        params: Sequence[np.ndarray],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def grad_check(
    params: MLPParams,
    loss_fn: Callable[[MLPParams], tuple[float, list[tuple[np.ndarray, np.ndarray]]]],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` evaluates the current parameters and returns
    ``(loss, grads)`` with grads in `mlp_backward` layout; it must be
    deterministic (fix any masks and data in its closure). Relative error
    per entry is ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)``.
    Raises FloatingPointError if any evaluated loss is non-finite.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    loss0, grads = loss_fn(params)
    if not np.isfinite(loss0):
        raise FloatingPointError("loss is not finite at the base point")
    flat = flatten_grads(grads)
    arrays = params.parameter_arrays()
    if len(flat) != len(arrays):
        raise ValueError("gradient layout does not match the parameter stack")
    max_rel = 0.0
    for arr, g in zip(arrays, flat):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            loss_plus = loss_fn(params)[0]
            arr[idx] = orig - epsilon
            loss_minus = loss_fn(params)[0]
            arr[idx] = orig
            if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
                raise FloatingPointError("loss is not finite at a perturbed point")
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = g[idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
            max_rel = max(max_rel, rel)
    return max_rel
