"""Optimizers that expose their update direction and diagonal pre-conditioner.

Every step is functional: it returns fresh arrays, so probing a would-be
update can never corrupt training state. The applied update always satisfies
params' = params - lr * direction.delta bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import NonFiniteValueError, UnsupportedOptimizerError
from .model import Batch, ModelSpec, gradient

KINDS = ("gd", "sgd-momentum", "adam", "adamw")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "gd"
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.0  # decoupled for adamw, coupled L2 otherwise

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")

    @property
    def adaptive(self) -> bool:
        return self.kind in ("adam", "adamw")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.m.copy(), self.v.copy(), self.t)


@dataclass
class UpdateDirection:
    delta: np.ndarray
    includes_decay: bool


def init_state(n: int) -> OptimizerState:
    return OptimizerState(np.zeros(n), np.zeros(n), 0)


def _bias_corrected_preconditioner(config, v, t):
    # P_t = (1 - beta1^t) * (sqrt(v_t / (1 - beta2^t)) + eps), per coordinate
    return (1.0 - config.beta1 ** t) * (
        np.sqrt(v / (1.0 - config.beta2 ** t)) + config.eps)


def step(config: OptimizerConfig, state: OptimizerState, params: np.ndarray,
         grad: np.ndarray):
    """One optimizer step. Returns (params', state', UpdateDirection)."""
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("mismatched parameter/gradient/state lengths")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteValueError("non-finite gradient passed to optimizer step")
    wd = config.weight_decay
    t_next = state.t + 1

    if config.kind == "gd":
        delta = grad + wd * params if wd else grad.copy()
        new_state = OptimizerState(state.m.copy(), state.v.copy(), t_next)
    elif config.kind == "sgd-momentum":
        g_eff = grad + wd * params if wd else grad
        m = config.beta1 * state.m + (1.0 - config.beta1) * g_eff
        delta = m.copy()
        new_state = OptimizerState(m, state.v.copy(), t_next)
    else:
        g_eff = grad + wd * params if (wd and config.kind == "adam") else grad
        m = config.beta1 * state.m + (1.0 - config.beta1) * g_eff
        v = config.beta2 * state.v + (1.0 - config.beta2) * g_eff * g_eff
        p_diag = _bias_corrected_preconditioner(config, v, t_next)
        delta = m / p_diag
        if config.kind == "adamw" and wd:
            delta = delta + wd * params
        new_state = OptimizerState(m, v, t_next)

    new_params = params - config.lr * delta
    includes_decay = wd > 0.0
    return new_params, new_state, UpdateDirection(delta, includes_decay)


def preconditioner(config: OptimizerConfig, state: OptimizerState) -> np.ndarray:
    """Diagonal of the pre-conditioner applied in the step that produced state.

    Strictly positive; P^-1 m reproduces the adaptive component of that step
    exactly. Requires at least one step/accumulation (t >= 1).
    """
    if not config.adaptive:
        raise UnsupportedOptimizerError(
            f"pre-conditioner undefined for optimizer kind {config.kind!r}")
    if state.t < 1:
        raise ValueError("pre-conditioner requires at least one step (t >= 1)")
    return _bias_corrected_preconditioner(config, state.v, state.t)


def warmup_moments(config: OptimizerConfig, state: OptimizerState,
                   params: np.ndarray, spec: ModelSpec,
                   batch_stream: Callable[[int], Batch],
                   steps: int) -> OptimizerState:
    """Accumulate first/second moments over `steps` gradients with the
    parameters frozen (no update), as used when probing a checkpoint whose
    optimizer state is unavailable."""
    if not config.adaptive:
        raise UnsupportedOptimizerError("moment warmup requires adam/adamw")
    m, v, t = state.m.copy(), state.v.copy(), state.t
    for k in range(steps):
        g = gradient(params, spec, batch_stream(k))
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * g * g
        t += 1
    return OptimizerState(m, v, t)
