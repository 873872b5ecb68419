"""Flat-parameter MLP core: forward loss, backprop gradient, finite-difference
Hessian-vector products, and the LossProbe primitive consumed by line search.

Parameters live in a single 1-D float64 vector so every optimizer and probe
can treat the model as an opaque point in R^n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteValueError, ZeroDirectionError

ACTIVATIONS = ("gelu", "relu", "identity")
HEADS = ("mse", "cross-entropy")

# tanh approximation of GeLU; documented so independent evaluators agree.
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelSpec:
    widths: tuple[int, ...]
    activation: str = "gelu"
    head: str = "cross-entropy"
    init_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    @property
    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def to_dict(self) -> dict:
        return {
            "widths": ",".join(str(w) for w in self.widths),
            "activation": self.activation,
            "head": self.head,
            "init_seed": self.init_seed,
            "init_scale": self.init_scale,
        }


@dataclass
class Batch:
    inputs: np.ndarray           # (examples, features)
    targets: np.ndarray          # labels (examples,) or matrix (examples, out)
    batch_id: int = 0
    source_tags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        targets = np.asarray(self.targets)
        if targets.shape[0] != self.inputs.shape[0]:
            raise ValueError("inputs and targets must have equal example counts")
        self.targets = targets
        if self.source_tags is not None and len(self.source_tags) != len(self.inputs):
            raise ValueError("source_tags length must match example count")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def check_finite(values: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError(f"non-finite value in {where}")
    return values


def init_params(spec: ModelSpec) -> np.ndarray:
    """Seeded Gaussian init, scale init_scale/sqrt(fan_in); biases zero."""
    rng = np.random.default_rng(spec.init_seed)
    chunks = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * (spec.init_scale / np.sqrt(fan_in))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unpack(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    if params.shape != (spec.param_count,):
        raise ValueError(
            f"params length {params.shape} does not match spec ({spec.param_count},)")
    layers = []
    off = 0
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        w = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z
    u = _GELU_C * (z + _GELU_A * z ** 3)
    return 0.5 * z * (1.0 + np.tanh(u))


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(z)
    u = _GELU_C * (z + _GELU_A * z ** 3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t ** 2) * _GELU_C * (1.0 + 3.0 * _GELU_A * z ** 2)


def _forward(params, spec, batch):
    layers = unpack(params, spec)
    if batch.inputs.shape[1] != spec.widths[0]:
        raise ValueError("batch feature width does not match model input width")
    a = batch.inputs
    pre, post = [], [a]
    # overflow manifests as a non-finite check, not a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (w, b) in enumerate(layers):
            z = a @ w + b
            check_finite(z, f"layer {i} pre-activation")
            a = _act(z, spec.activation) if i < len(layers) - 1 else z
            pre.append(z)
            post.append(a)
    return layers, pre, post


def _head_loss_grad(out, batch, spec, want_grad):
    n = batch.size
    with np.errstate(over="ignore", invalid="ignore"):
        return _head_loss_grad_inner(out, batch, spec, want_grad, n)


def _head_loss_grad_inner(out, batch, spec, want_grad, n):
    if spec.head == "mse":
        targets = np.asarray(batch.targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
        r = out - targets
        loss = float(np.sum(0.5 * np.sum(r * r, axis=1)) / n)
        grad = r / n if want_grad else None
    else:
        labels = np.asarray(batch.targets).astype(np.int64).ravel()
        zmax = np.max(out, axis=1, keepdims=True)
        shifted = out - zmax
        logz = np.log(np.sum(np.exp(shifted), axis=1))
        per_example = logz - shifted[np.arange(n), labels]
        loss = float(np.sum(per_example) / n)
        grad = None
        if want_grad:
            p = np.exp(shifted - logz[:, None])
            p[np.arange(n), labels] -= 1.0
            grad = p / n
    check_finite(np.asarray(loss), "loss head")
    return loss, grad


def loss(params: np.ndarray, spec: ModelSpec, batch: Batch) -> float:
    """Mean per-example loss; deterministic for identical inputs."""
    if batch.size == 0:
        raise ValueError("batch is empty")
    _, _, post = _forward(params, spec, batch)
    value, _ = _head_loss_grad(post[-1], batch, spec, want_grad=False)
    return value


def loss_and_gradient(params: np.ndarray, spec: ModelSpec, batch: Batch):
    if batch.size == 0:
        raise ValueError("batch is empty")
    layers, pre, post = _forward(params, spec, batch)
    value, d = _head_loss_grad(post[-1], batch, spec, want_grad=True)
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw = post[i].T @ d
        gb = np.sum(d, axis=0)
        grads[i] = (gw, gb)
        if i > 0:
            d = (d @ w.T) * _act_grad(pre[i - 1], spec.activation)
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    check_finite(flat, "gradient")
    return value, flat


def gradient(params: np.ndarray, spec: ModelSpec, batch: Batch) -> np.ndarray:
    """Reverse-mode gradient of the mean loss."""
    return loss_and_gradient(params, spec, batch)[1]


def hvp(params: np.ndarray, spec: ModelSpec, batch: Batch, v: np.ndarray,
        eps: float = 1e-3) -> np.ndarray:
    """Hessian-vector product via central finite differences of the gradient.

    The direction is normalized before differencing and the result rescaled,
    so the step size is independent of |v|. The step is eps relative to the
    parameter RMS. Exact for quadratic losses (affine gradients).
    """
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroDirectionError("hvp direction must be nonzero")
    unit = v / norm
    h = eps * (1.0 + float(np.linalg.norm(params)) / np.sqrt(params.size))
    g_plus = gradient(params + h * unit, spec, batch)
    g_minus = gradient(params - h * unit, spec, batch)
    return (g_plus - g_minus) * (norm / (2.0 * h))


@dataclass
class LossProbe:
    """Deterministic evaluator of eta -> L(theta - eta*delta) on a fixed batch.

    Caches the base loss (one evaluation); the eval counter increments by
    exactly one per loss evaluation, base included. Single-owner, sequential.
    """

    loss_fn: Callable[[np.ndarray], float]
    params: np.ndarray
    delta: np.ndarray
    loss_ids: Optional[tuple[str, str]] = None
    evals: int = field(default=0, init=False)
    base_loss: float = field(init=False)

    def __post_init__(self):
        if self.params.shape != self.delta.shape:
            raise ValueError("params and delta lengths differ")
        check_finite(self.delta, "probe direction")
        self.base_loss = self.eval(0.0)

    def eval(self, eta: float) -> float:
        self.evals += 1
        return float(self.loss_fn(self.params - eta * self.delta))

    @property
    def delta_norm(self) -> float:
        return float(np.linalg.norm(self.delta))


def make_probe(params: np.ndarray, spec: ModelSpec, batch: Batch,
               delta: np.ndarray, loss_ids=None) -> LossProbe:
    """Probe over the MLP loss on a fixed batch along direction delta."""
    return LossProbe(lambda p: loss(p, spec, batch), params, delta, loss_ids=loss_ids)
