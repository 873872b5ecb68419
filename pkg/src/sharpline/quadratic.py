"""Closed-form quadratic test problems and stability theory.

Threshold formulas for GD and AdamW with weight decay, the three-inequality
stability predicate for second-order linear difference equations, scalar
brute-force divergence simulators, and a bisection that locates empirical
stability boundaries from simulator verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoBoundaryError
from .model import LossProbe

DIVERGENCE_CEILING = 1e12   # |q| > ceiling * |q0|  => diverged
DECAY_FLOOR = 1e-12         # two successive |q| below floor * |q0| => settled
DEFAULT_STEPS = 10_000


@dataclass(frozen=True)
class QuadraticProblem:
    """Diagonal quadratic loss 0.5 * sum(lam_i x_i^2) + g.x + c (eigenbasis)."""

    eigenvalues: np.ndarray
    offset: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, float))
        object.__setattr__(self, "offset", np.asarray(self.offset, float))
        if self.eigenvalues.shape != self.offset.shape:
            raise ValueError("eigenvalues and offset must have equal length")

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def loss(self, theta: np.ndarray) -> float:
        return float(0.5 * np.sum(self.eigenvalues * theta * theta)
                     + self.offset @ theta + self.constant)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return self.eigenvalues * theta + self.offset

    def hvp(self, v: np.ndarray) -> np.ndarray:
        return self.eigenvalues * v

    def probe_along(self, theta: np.ndarray, delta: np.ndarray,
                    loss_ids=None) -> LossProbe:
        return LossProbe(self.loss, np.asarray(theta, float),
                         np.asarray(delta, float), loss_ids=loss_ids)


@dataclass(frozen=True)
class TrajectoryVerdict:
    diverged: bool
    steps_simulated: int
    final_magnitudes: list[float]
    growth_ratio: float


def gd_wd_threshold(eta: float, gamma: float) -> float:
    """Largest stable Hessian eigenvalue for GD with weight decay: 2/eta - gamma."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return 2.0 / eta - gamma


def adamw_threshold(eta: float, gamma: float, beta1: float) -> float:
    """Largest stable pre-conditioned eigenvalue for AdamW:
    (2/eta - gamma) * (1 + beta1)/(1 - beta1)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if not (0.0 <= beta1 < 1.0):
        raise ValueError("beta1 must lie in [0, 1)")
    return (2.0 / eta - gamma) * (1.0 + beta1) / (1.0 - beta1)


def stability_predicate(p1: float, p2: float) -> bool:
    """Asymptotic stability of q_{t+1} + p1 q_t + p2 q_{t-1} = const:
    all of 1+p1+p2, 1-p1+p2, 1-p2 strictly positive."""
    return (1.0 + p1 + p2 > 0.0) and (1.0 - p1 + p2 > 0.0) and (1.0 - p2 > 0.0)


def _geometric_mean_ratio(magnitudes: list[float]) -> float:
    tail = magnitudes[-(max(len(magnitudes) // 4, 2)):]
    logs = [math.log(b / a) for a, b in zip(tail[:-1], tail[1:]) if a > 0 and b > 0]
    if not logs:
        return 0.0
    return math.exp(sum(logs) / len(logs))


def simulate_gd_wd(lam: float, eta: float, gamma: float,
                   steps: int = DEFAULT_STEPS, q0: float = 1.0) -> TrajectoryVerdict:
    """Iterate q_{t+1} = (1 - eta*gamma - eta*lam) q_t and report divergence."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    factor = 1.0 - eta * gamma - eta * lam
    ceiling = DIVERGENCE_CEILING * abs(q0)
    floor = DECAY_FLOOR * abs(q0)
    q = q0
    magnitudes = [abs(q)]
    for t in range(1, steps + 1):
        q = factor * q
        mag = abs(q)
        magnitudes.append(mag)
        if mag > ceiling:
            return TrajectoryVerdict(True, t, [mag], _geometric_mean_ratio(magnitudes))
        if mag < floor and magnitudes[-2] < floor:
            return TrajectoryVerdict(False, t, [mag], _geometric_mean_ratio(magnitudes))
    return TrajectoryVerdict(False, steps, [abs(q)], _geometric_mean_ratio(magnitudes))


def simulate_adamw_frozen(lam_ph: float, eta: float, gamma: float, beta1: float,
                          steps: int = DEFAULT_STEPS, q0: float = 1.0,
                          q1: float = 1.0 + 1e-3) -> TrajectoryVerdict:
    """Iterate the frozen-pre-conditioner AdamW recursion
    q_{t+1} = [1 - eta*gamma + beta1 - eta*(1-beta1)*lam_ph] q_t
              - beta1 (1 - eta*gamma) q_{t-1}
    (homogeneous part; the forcing constant does not affect stability).
    Default (q0, q1) is slightly asymmetric so no eigenspace is missed.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    a = 1.0 - eta * gamma + beta1 - eta * (1.0 - beta1) * lam_ph
    b = beta1 * (1.0 - eta * gamma)
    base = max(abs(q0), abs(q1), 1e-300)
    ceiling = DIVERGENCE_CEILING * base
    floor = DECAY_FLOOR * base
    prev, cur = q0, q1
    magnitudes = [abs(q0), abs(q1)]
    for t in range(2, steps + 1):
        prev, cur = cur, a * cur - b * prev
        mag = abs(cur)
        magnitudes.append(mag)
        if mag > ceiling:
            return TrajectoryVerdict(True, t, [abs(prev), mag],
                                     _geometric_mean_ratio(magnitudes))
        if mag < floor and abs(prev) < floor:
            return TrajectoryVerdict(False, t, [abs(prev), mag],
                                     _geometric_mean_ratio(magnitudes))
    return TrajectoryVerdict(False, steps, [abs(prev), abs(cur)],
                             _geometric_mean_ratio(magnitudes))


def empirical_boundary(simulate: Callable[[float], TrajectoryVerdict],
                       lo: float, hi: float, tol: float = 1e-4) -> float:
    """Bisect on the diverged/converged verdict; returns the boundary within
    relative tolerance tol. The two endpoints must disagree."""
    v_lo = simulate(lo).diverged
    v_hi = simulate(hi).diverged
    if v_lo == v_hi:
        raise NoBoundaryError(
            f"same verdict (diverged={v_lo}) at both endpoints {lo} and {hi}")
    while (hi - lo) > tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if simulate(mid).diverged == v_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
