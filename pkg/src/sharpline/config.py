"""Flat key=value experiment configs.

The file format is deliberately dumb: one `key = value` per line, `#`
comments, no sections. Unknown keys are hard errors so a typo in a
hyperparameter name cannot silently invalidate an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .data import MixSpec, TaskSpec
from .errors import ConfigError
from .model import ModelSpec
from .optim import OptimizerConfig
from .probes import ProbeSettings

PROBE_KINDS = ("critical", "directional", "hessian", "preconditioned", "relative")


def _parse_bool(s):
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s):
    return tuple(int(x) for x in s.split(","))


def _parse_float_list(s):
    return tuple(float(x) for x in s.split(","))


def _parse_str_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


# key -> (parser, default); None default means "required by whichever command uses it"
_SCHEMA = {
    "seed": (int, 0),
    "steps": (int, 200),
    "model.widths": (_parse_int_list, (8, 16, 2)),
    "model.activation": (str, "gelu"),
    "model.head": (str, "cross-entropy"),
    "model.init_seed": (int, 0),
    "model.init_scale": (float, 1.0),
    "opt.kind": (str, "gd"),
    "opt.lr": (float, 0.1),
    "opt.beta1": (float, 0.9),
    "opt.beta2": (float, 0.99),
    "opt.eps": (float, 1e-8),
    "opt.weight_decay": (float, 0.0),
    "data.kind": (str, "gaussian-mixture-classify"),
    "data.dim": (int, 8),
    "data.classes": (int, 2),
    "data.separation": (float, 2.0),
    "data.noise": (float, 1.0),
    "data.rotation": (float, 0.0),
    "data.seed": (int, 0),
    "data.batch_size": (int, 64),
    "data.fixed_batch": (_parse_bool, False),
    "data.path": (str, ""),
    "data.format": (str, ""),
    "probe.eta0": (float, 0.1),
    "probe.epsilon": (float, 1.0 / 16.0),
    "probe.max_iters": (int, 40),
    "probe.cadence": (int, 10),
    "probe.menu": (_parse_str_list, ("critical",)),
    "probe.power_tol": (float, 1e-4),
    "probe.power_max_iter": (int, 200),
    "mix.rho_list": (_parse_float_list, (0.0, 0.25, 0.5, 0.75, 1.0)),
    "mix.batch_size": (int, 64),
    "mix.seed": (int, 0),
    "mix.warmup_steps": (int, 100),
    "mix.probe_batches": (int, 5),
    "mix.pretrain_steps": (int, 300),
    "mix.pretrain_lr": (float, 0.2),
    "mix.pretrain_loss": (float, 0.0),
    "mix.checkpoint": (str, ""),
    "mix.rotation": (float, 1.5707963267948966),
    "quad.optimizer": (str, "gd"),
    "quad.lambdas": (_parse_float_list, (1.0, 3.16, 10.0, 31.6, 100.0)),
    "quad.gammas": (_parse_float_list, (0.0, 0.1, 1.0, 3.0, 10.0)),
    "quad.etas": (_parse_float_list, (1e-3, 3e-3)),
    "quad.beta1s": (_parse_float_list, (0.0, 0.5, 0.9)),
    "quad.steps": (int, 100_000),
    "quad.tol": (float, 2e-4),
    "quad.gd_rel_tol": (float, 1e-3),
    "quad.adamw_rel_tol": (float, 1e-2),
}


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    def __getitem__(self, key):
        if key in self.raw:
            return self.raw[key]
        _, default = _SCHEMA[key]
        return default

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            widths=self["model.widths"],
            activation=self["model.activation"],
            head=self["model.head"],
            init_seed=self["model.init_seed"],
            init_scale=self["model.init_scale"],
        )

    @property
    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self["opt.kind"],
            lr=self["opt.lr"],
            beta1=self["opt.beta1"],
            beta2=self["opt.beta2"],
            eps=self["opt.eps"],
            weight_decay=self["opt.weight_decay"],
        )

    @property
    def task_spec(self) -> TaskSpec:
        return TaskSpec(
            kind=self["data.kind"],
            dim=self["data.dim"],
            n_classes=self["data.classes"],
            separation=self["data.separation"],
            noise=self["data.noise"],
            rotation=self["data.rotation"],
            seed=self["data.seed"],
        )

    @property
    def task_b_spec(self) -> TaskSpec:
        return TaskSpec(
            kind="rotated-variant",
            dim=self["data.dim"],
            n_classes=self["data.classes"],
            separation=self["data.separation"],
            noise=self["data.noise"],
            rotation=self["mix.rotation"],
            seed=self["data.seed"],
        )

    @property
    def probe_settings(self) -> ProbeSettings:
        return ProbeSettings(
            eta0=self["probe.eta0"],
            epsilon=self["probe.epsilon"],
            max_expo_iters=self["probe.max_iters"],
        )

    @property
    def probe_menu(self) -> tuple[str, ...]:
        menu = self["probe.menu"]
        for kind in menu:
            if kind not in PROBE_KINDS:
                raise ConfigError(f"unknown probe kind {kind!r}")
        if not menu:
            raise ConfigError("probe.menu must be nonempty")
        return menu


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        values = parse_config_text(fh.read())
    cfg = ExperimentConfig(values)
    if cfg["probe.cadence"] < 1:
        raise ConfigError("probe.cadence must be >= 1")
    return cfg
