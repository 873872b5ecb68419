"""Sharpness estimators.

Two-phase line search for the critical learning rate (exponential bracketing
followed by binary refinement), directional sharpness, power-iteration
Hessian and pre-conditioned sharpness, and the relative variant that probes
one loss along an update direction derived from another.

Conventions: a trial loss counts as "increased" only when strictly greater
than the base loss; a non-finite trial loss counts as increased (a diverged
step has certainly left the basin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateDenominatorError, ZeroDirectionError
from .model import LossProbe

_DENOM_FLOOR = 1e-30


@dataclass(frozen=True)
class ProbeSettings:
    eta0: float = 0.1
    epsilon: float = 1.0 / 16.0     # binary-search relative tolerance
    max_expo_iters: int = 40        # exponential-search evaluation cap

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.max_expo_iters < 1:
            raise ValueError("max_expo_iters must be >= 1")


@dataclass(frozen=True)
class Bracket:
    eta_lower: float
    eta_upper: float
    degenerate: bool = False


@dataclass(frozen=True)
class SharpnessEstimate:
    eta_c: float
    lambda_c: float
    bracket: Bracket
    forward_passes: int
    warm_started: bool = False
    loss_ids: Optional[tuple[str, str]] = None

    @property
    def degenerate(self) -> bool:
        return self.bracket.degenerate


def _increased(trial: float, base: float) -> bool:
    return (not math.isfinite(trial)) or trial > base


def exponential_search(probe: LossProbe, settings: ProbeSettings) -> Bracket:
    """Double (halve) eta from eta0 until the loss first rises above (falls
    below) the base loss; returns a factor-2 bracket, or a degenerate [eta,
    eta] bracket when the iteration cap is hit."""
    if probe.delta_norm == 0.0:
        raise ZeroDirectionError("zero update direction: loss can never increase")
    base = probe.base_loss
    if not math.isfinite(base):
        raise ValueError("probe base loss is not finite")
    eta = settings.eta0
    trial = probe.eval(eta)
    i = 1
    direction = 1 if (math.isfinite(trial) and trial < base) else -1
    while i < settings.max_expo_iters:
        eta = eta * 2.0 if direction > 0 else eta * 0.5
        trial = probe.eval(eta)
        i += 1
        if direction > 0 and _increased(trial, base):
            return Bracket(eta / 2.0, eta)
        if direction < 0 and math.isfinite(trial) and trial < base:
            return Bracket(eta, 2.0 * eta)
    return Bracket(eta, eta, degenerate=True)


def binary_search(probe: LossProbe, bracket: Bracket,
                  settings: ProbeSettings) -> Bracket:
    """Shrink the bracket by midpoint evaluation until the relative gap
    |1 - lower/upper| falls strictly below epsilon. Degenerate input passes
    through."""
    if bracket.degenerate:
        return bracket
    lo, hi = bracket.eta_lower, bracket.eta_upper
    base = probe.base_loss
    # Loop while the gap is >= epsilon (stop strictly below): from a factor-2
    # bracket with epsilon = 2^-k this takes exactly k midpoint evaluations.
    while abs(1.0 - lo / hi) >= settings.epsilon:
        mid = 0.5 * (lo + hi)
        if _increased(probe.eval(mid), base):
            hi = mid
        else:
            lo = mid
    return Bracket(lo, hi)


def critical_lr(probe: LossProbe, settings: ProbeSettings,
                warm_started: bool = False) -> SharpnessEstimate:
    """Full critical learning-rate estimate: exponential then binary search.

    eta_c is the final bracket midpoint, lambda_c = 2/eta_c; the reported
    forward-pass count includes the cached base-loss evaluation.
    """
    before = probe.evals
    bracket = binary_search(probe, exponential_search(probe, settings), settings)
    passes = probe.evals - before + 1
    eta_c = 0.5 * (bracket.eta_lower + bracket.eta_upper)
    return SharpnessEstimate(eta_c, 2.0 / eta_c, bracket, passes,
                             warm_started=warm_started, loss_ids=probe.loss_ids)


def relative_critical_lr(probe: LossProbe, settings: ProbeSettings,
                         warm_started: bool = False) -> SharpnessEstimate:
    """Critical LR of one loss along a direction derived from another.

    Identical algorithm to critical_lr; the probe carries loss_ids naming
    the probed loss and the loss the direction came from.
    """
    if probe.loss_ids is None:
        raise ValueError("relative probe must carry loss_ids (probed, direction)")
    return critical_lr(probe, settings, warm_started=warm_started)


def directional_sharpness(grad: np.ndarray, delta: np.ndarray,
                          h_delta: np.ndarray) -> float:
    """Quadratic-model curvature along delta: (delta^T H delta)/(delta^T g)."""
    denom = float(delta @ grad)
    if abs(denom) < _DENOM_FLOOR:
        raise DegenerateDenominatorError(
            f"delta^T grad = {denom!r} is below the {_DENOM_FLOOR} floor")
    return float(delta @ h_delta) / denom


@dataclass(frozen=True)
class PowerIterationResult:
    eigenvalue: float
    eigenvector: np.ndarray
    converged: bool
    iterations: int


def power_iteration(hvp_fn: Callable[[np.ndarray], np.ndarray], dim: int,
                    tol: float = 1e-4, max_iter: int = 200,
                    seed: int = 0) -> PowerIterationResult:
    """Largest-|lambda| eigenpair of the linear map hvp_fn.

    The eigenvalue is the Rayleigh quotient of the unit iterate, so negative
    top eigenvalues come out with the correct sign. Starts from a seeded
    random unit vector; converged when successive estimates agree to tol
    relative.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-1.0, 1.0, dim)
    vec /= np.linalg.norm(vec)
    lam_prev = None
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = hvp_fn(vec)
        lam = float(vec @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return PowerIterationResult(0.0, vec, True, it)
        residual = float(np.linalg.norm(w - lam * vec))
        vec = w / norm
        if residual <= tol * max(abs(lam), _DENOM_FLOOR):
            return PowerIterationResult(lam, vec, True, it)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), _DENOM_FLOOR):
            return PowerIterationResult(lam, vec, True, it)
        lam_prev = lam
    return PowerIterationResult(lam, vec, False, max_iter)


def preconditioned_sharpness(hvp_fn: Callable[[np.ndarray], np.ndarray],
                             precond: np.ndarray, dim: int, tol: float = 1e-4,
                             max_iter: int = 200, seed: int = 0) -> PowerIterationResult:
    """Top eigenvalue of P^(-1/2) H P^(-1/2) for diagonal P > 0."""
    precond = np.asarray(precond, dtype=np.float64)
    if precond.shape != (dim,):
        raise ValueError("pre-conditioner diagonal length must equal dim")
    if np.any(precond <= 0.0):
        raise ValueError("pre-conditioner diagonal must be strictly positive")
    inv_sqrt = 1.0 / np.sqrt(precond)
    return power_iteration(lambda u: inv_sqrt * hvp_fn(inv_sqrt * u), dim,
                           tol=tol, max_iter=max_iter, seed=seed)
