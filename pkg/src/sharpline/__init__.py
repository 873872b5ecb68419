"""Forward-pass critical-sharpness probes, optimizer stability thresholds,
and data-mixing sweeps at desk scale."""

from .data import MixSpec, TaskSpec, generate, ingest, mix_batch
from .model import (Batch, LossProbe, ModelSpec, gradient, hvp, init_params,
                    loss, make_probe)
from .optim import (OptimizerConfig, OptimizerState, UpdateDirection,
                    init_state, preconditioner, step, warmup_moments)
from .probes import (Bracket, ProbeSettings, SharpnessEstimate, binary_search,
                     critical_lr, directional_sharpness, exponential_search,
                     power_iteration, preconditioned_sharpness,
                     relative_critical_lr)
from .quadratic import (QuadraticProblem, TrajectoryVerdict, adamw_threshold,
                        empirical_boundary, gd_wd_threshold, simulate_adamw_frozen,
                        simulate_gd_wd, stability_predicate)

__version__ = "0.1.0"

__all__ = [
    "Batch", "Bracket", "LossProbe", "MixSpec", "ModelSpec",
    "OptimizerConfig", "OptimizerState", "ProbeSettings", "QuadraticProblem",
    "SharpnessEstimate", "TaskSpec", "TrajectoryVerdict", "UpdateDirection",
    "adamw_threshold", "binary_search", "critical_lr", "directional_sharpness",
    "empirical_boundary", "exponential_search", "gd_wd_threshold", "generate",
    "gradient", "hvp", "ingest", "init_params", "init_state", "loss",
    "make_probe", "mix_batch", "power_iteration", "preconditioned_sharpness",
    "preconditioner", "relative_critical_lr", "simulate_adamw_frozen",
    "simulate_gd_wd", "stability_predicate", "step", "warmup_moments",
]
