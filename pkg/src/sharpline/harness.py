"""Experiment runner: training with periodic probes, quadratic validation
grids, mix-ratio sweeps, and checkpoint/log IO.

All log files are deterministic byte-for-byte for identical configs: floats
are written with repr (shortest round-trip) and rows in sorted key order.
"""

from __future__ import annotations

import json
import math
import os
import statistics
from dataclasses import dataclass

import numpy as np

from . import data as datamod
from . import model as modelmod
from . import optim as optmod
from . import probes as probemod
from . import quadratic as quadmod
from .config import ExperimentConfig
from .errors import ConfigError, NonFiniteValueError

SCHEMA_VERSION = 1
STATUS_OK = 0
STATUS_USAGE = 1
STATUS_VALIDATION = 2
STATUS_DIVERGENCE = 3

HELD_OUT_START = 1_000_000  # index offset reserved for evaluation batches


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(float(x))  # plain-float repr even for numpy scalars
    return str(x)


def _jsonl_record(**fields) -> str:
    return json.dumps(fields, sort_keys=True)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("SHARPLINE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path: str, params: np.ndarray, state: optmod.OptimizerState):
    with open(path, "w") as fh:
        fh.write(f"# t={state.t}\n")
        fh.write("index,param,m,v\n")
        for i in range(params.size):
            fh.write(f"{i},{float(params[i])!r},{float(state.m[i])!r},"
                     f"{float(state.v[i])!r}\n")


def load_checkpoint(path: str):
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# t="):
            raise ConfigError(f"{path}: not a checkpoint file (missing '# t=' line)")
        t = int(first[4:])
        header = fh.readline().strip()
        if header != "index,param,m,v":
            raise ConfigError(f"{path}: unexpected checkpoint header {header!r}")
        params, m, v = [], [], []
        for line in fh:
            _, p_, m_, v_ = line.strip().split(",")
            params.append(float(p_))
            m.append(float(m_))
            v.append(float(v_))
    return np.array(params), optmod.OptimizerState(np.array(m), np.array(v), t)


# ---------------------------------------------------------------------------
# training with probes

@dataclass
class TrainResult:
    status: int
    steps_run: int
    final_loss: float
    runlog_path: str
    probes_path: str


def _batch_stream(cfg: ExperimentConfig):
    if cfg["data.path"]:
        ds = datamod.ingest(cfg["data.path"], cfg["data.format"])
        size = cfg["data.batch_size"]
        if cfg["data.fixed_batch"]:
            fixed = ds.batch(0, min(size, ds.size))
            return lambda k: fixed
        return lambda k: ds.batch(k * size, size, batch_id=k)
    task = cfg.task_spec
    size = cfg["data.batch_size"]
    if cfg["data.fixed_batch"]:
        fixed = datamod.generate(task, 0, size)
        return lambda k: fixed
    return lambda k: datamod.generate(task, k * size, size, batch_id=k)


def _threshold(opt_cfg: optmod.OptimizerConfig) -> float:
    if opt_cfg.adaptive:
        return quadmod.adamw_threshold(opt_cfg.lr, opt_cfg.weight_decay, opt_cfg.beta1)
    return quadmod.gd_wd_threshold(opt_cfg.lr, opt_cfg.weight_decay)


def cmd_train(cfg: ExperimentConfig, out_dir: str) -> TrainResult:
    os.makedirs(out_dir, exist_ok=True)
    spec = cfg.model_spec
    opt_cfg = cfg.optimizer_config
    settings = cfg.probe_settings
    menu = cfg.probe_menu
    stream = _batch_stream(cfg)
    cadence = cfg["probe.cadence"]

    params = modelmod.init_params(spec)
    state = optmod.init_state(params.size)
    two_over_eta = 2.0 / opt_cfg.lr
    threshold = _threshold(opt_cfg)

    runlog_path = os.path.join(out_dir, "runlog.csv")
    probes_path = os.path.join(out_dir, "probes.jsonl")
    status = STATUS_OK
    steps_run = 0
    final_loss = math.nan
    warm_eta0 = None

    with open(runlog_path, "w") as runlog, open(probes_path, "w") as probelog:
        runlog.write("schema_version,step,train_loss,lr,threshold\n")
        for k in range(cfg["steps"]):
            batch = stream(k)
            try:
                train_loss, grad = modelmod.loss_and_gradient(params, spec, batch)
            except NonFiniteValueError:
                status = STATUS_DIVERGENCE
                break
            final_loss = train_loss
            runlog.write(f"{SCHEMA_VERSION},{k},{_fmt(train_loss)},"
                         f"{_fmt(opt_cfg.lr)},{_fmt(threshold)}\n")
            if not math.isfinite(train_loss):
                status = STATUS_DIVERGENCE
                break

            new_params, new_state, direction = optmod.step(opt_cfg, state, params, grad)

            if k % cadence == 0:
                warm_eta0 = _run_probes(
                    probelog, k, menu, cfg, settings, spec, batch, params, grad,
                    direction, new_state, opt_cfg, two_over_eta, threshold, warm_eta0)

            params, state = new_params, new_state
            steps_run = k + 1

    return TrainResult(status, steps_run, final_loss, runlog_path, probes_path)


def _run_probes(probelog, step_idx, menu, cfg, settings, spec, batch, params,
                grad, direction, post_state, opt_cfg, two_over_eta, threshold,
                warm_eta0):
    common = dict(step=step_idx, two_over_eta=two_over_eta, threshold=threshold)
    if "critical" in menu:
        if warm_eta0 is not None:
            probe_settings = probemod.ProbeSettings(
                eta0=warm_eta0, epsilon=settings.epsilon,
                max_expo_iters=settings.max_expo_iters)
            warm = True
        else:
            probe_settings = settings
            warm = False
        probe = modelmod.make_probe(params, spec, batch, direction.delta)
        est = probemod.critical_lr(probe, probe_settings, warm_started=warm)
        probelog.write(_jsonl_record(
            kind="critical", eta_c=est.eta_c, lambda_c=est.lambda_c,
            eta_lower=est.bracket.eta_lower, eta_upper=est.bracket.eta_upper,
            forward_passes=est.forward_passes, degenerate=est.degenerate,
            warm_started=est.warm_started, loss_ids=None, **common) + "\n")
        if not est.degenerate:
            warm_eta0 = est.eta_c
    if "directional" in menu:
        h_delta = modelmod.hvp(params, spec, batch, direction.delta)
        lam_dir = probemod.directional_sharpness(grad, direction.delta, h_delta)
        probelog.write(_jsonl_record(
            kind="directional", eta_c=None, lambda_c=lam_dir, eta_lower=None,
            eta_upper=None, forward_passes=None, degenerate=False,
            warm_started=False, loss_ids=None, **common) + "\n")
    if "hessian" in menu:
        res = probemod.power_iteration(
            lambda v: modelmod.hvp(params, spec, batch, v), params.size,
            tol=cfg["probe.power_tol"], max_iter=cfg["probe.power_max_iter"],
            seed=cfg["seed"])
        probelog.write(_jsonl_record(
            kind="hessian", eta_c=None, lambda_c=res.eigenvalue, eta_lower=None,
            eta_upper=None, forward_passes=None, degenerate=not res.converged,
            warm_started=False, loss_ids=None, **common) + "\n")
    if "preconditioned" in menu and opt_cfg.adaptive and post_state.t >= 1:
        p_diag = optmod.preconditioner(opt_cfg, post_state)
        res = probemod.preconditioned_sharpness(
            lambda v: modelmod.hvp(params, spec, batch, v), p_diag, params.size,
            tol=cfg["probe.power_tol"], max_iter=cfg["probe.power_max_iter"],
            seed=cfg["seed"])
        probelog.write(_jsonl_record(
            kind="preconditioned", eta_c=None, lambda_c=res.eigenvalue,
            eta_lower=None, eta_upper=None, forward_passes=None,
            degenerate=not res.converged, warm_started=False, loss_ids=None,
            **common) + "\n")
    return warm_eta0


# ---------------------------------------------------------------------------
# quadratic validation grid

def _gd_cell(args):
    lam, gamma, steps, tol = args
    predicted = 2.0 / (lam + gamma)
    try:
        empirical = quadmod.empirical_boundary(
            lambda eta: quadmod.simulate_gd_wd(lam, eta, gamma, steps=steps),
            0.5 * predicted, 1.5 * predicted, tol=tol)
        rel = abs(empirical - predicted) / predicted
    except quadmod.NoBoundaryError:
        empirical, rel = math.nan, math.nan
    return ("gd", None, gamma, None, lam, predicted, empirical, rel)


def _adamw_cell(args):
    eta, gamma, beta1, steps, tol = args
    predicted = quadmod.adamw_threshold(eta, gamma, beta1)
    try:
        empirical = quadmod.empirical_boundary(
            lambda lam: quadmod.simulate_adamw_frozen(lam, eta, gamma, beta1,
                                                      steps=steps),
            0.5 * predicted, 1.5 * predicted, tol=tol)
        rel = abs(empirical - predicted) / predicted
    except quadmod.NoBoundaryError:
        empirical, rel = math.nan, math.nan
    return ("adamw", eta, gamma, beta1, None, predicted, empirical, rel)


def cmd_quad_validate(cfg: ExperimentConfig, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    which = cfg["quad.optimizer"]
    if which not in ("gd", "adamw", "both"):
        raise ConfigError(f"quad.optimizer must be gd, adamw, or both, not {which!r}")
    steps = cfg["quad.steps"]
    tol = cfg["quad.tol"]
    jobs = []
    if which in ("gd", "both"):
        jobs += [("gd", (lam, gamma, steps, tol))
                 for lam in cfg["quad.lambdas"] for gamma in cfg["quad.gammas"]]
    if which in ("adamw", "both"):
        jobs += [("adamw", (eta, gamma, beta1, steps, tol))
                 for eta in cfg["quad.etas"] for gamma in cfg["quad.gammas"]
                 for beta1 in cfg["quad.beta1s"]]
    if not jobs:
        raise ConfigError("empty validation grid")

    workers = threads()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]

    rows.sort(key=lambda r: tuple(-math.inf if x is None else x
                                  for x in (0 if r[0] == "gd" else 1,) + r[1:5]))
    path = os.path.join(out_dir, "boundary_map.csv")
    status = STATUS_OK
    tolerances = {"gd": cfg["quad.gd_rel_tol"], "adamw": cfg["quad.adamw_rel_tol"]}
    with open(path, "w") as fh:
        fh.write("schema_version,optimizer,eta,gamma,beta1,lam,"
                 "predicted_threshold,empirical_boundary,rel_error\n")
        for opt, eta, gamma, beta1, lam, pred, emp, rel in rows:
            fh.write(",".join([str(SCHEMA_VERSION), opt, _fmt(eta), _fmt(gamma),
                               _fmt(beta1), _fmt(lam), _fmt(pred), _fmt(emp),
                               _fmt(rel)]) + "\n")
            if not math.isnan(rel) and rel > tolerances[opt]:
                status = STATUS_VALIDATION
    return status, path


def _run_cell(job):
    kind, args = job
    return _gd_cell(args) if kind == "gd" else _adamw_cell(args)


# ---------------------------------------------------------------------------
# mix-ratio sweep

def _mean_sd(values):
    if not values:
        return math.nan, math.nan
    if len(values) == 1:
        return values[0], 0.0
    return statistics.fmean(values), statistics.stdev(values)


def cmd_mix_sweep(cfg: ExperimentConfig, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    spec = cfg.model_spec
    opt_cfg = cfg.optimizer_config
    if not opt_cfg.adaptive:
        raise ConfigError("mix-sweep requires an adaptive optimizer "
                          "(set opt.kind = adam or adamw)")
    task_a = cfg.task_spec
    task_b = cfg.task_b_spec
    settings = cfg.probe_settings
    batch_size = cfg["mix.batch_size"]
    eval_a = datamod.generate(task_a, HELD_OUT_START, batch_size, tag="A")
    eval_b = datamod.generate(task_b, HELD_OUT_START, batch_size, tag="B")

    params, pretrain_loss = _pretrained_params(cfg, spec, task_a, eval_a)

    sweep_path = os.path.join(out_dir, "sweep.csv")
    probes_path = os.path.join(out_dir, "sweep_probes.jsonl")
    with open(sweep_path, "w") as fh, open(probes_path, "w") as probelog:
        fh.write("schema_version,rho,lambda_a_mean,lambda_a_sd,"
                 "lambda_b_mean,lambda_b_sd,degenerate_a,degenerate_b,"
                 "probe_batches,pretrain_loss\n")
        for rho in cfg["mix.rho_list"]:
            mix = datamod.MixSpec(task_a, task_b, rho, batch_size,
                                  seed=cfg["mix.seed"])
            row = _sweep_point(cfg, spec, opt_cfg, settings, params, mix,
                               eval_a, eval_b, probelog)
            lam_a, lam_b, deg_a, deg_b = row
            a_mean, a_sd = _mean_sd(lam_a)
            b_mean, b_sd = _mean_sd(lam_b)
            fh.write(",".join([str(SCHEMA_VERSION), _fmt(rho), _fmt(a_mean),
                               _fmt(a_sd), _fmt(b_mean), _fmt(b_sd),
                               str(deg_a), str(deg_b),
                               str(cfg["mix.probe_batches"]),
                               _fmt(pretrain_loss)]) + "\n")
    return STATUS_OK, sweep_path


def _pretrained_params(cfg, spec, task_a, eval_a):
    threshold = cfg["mix.pretrain_loss"]
    if cfg["mix.checkpoint"]:
        params, _ = load_checkpoint(cfg["mix.checkpoint"])
        if params.size != spec.param_count:
            raise ConfigError("checkpoint parameter count does not match model spec")
        loss_a = modelmod.loss(params, spec, eval_a)
        if threshold > 0 and loss_a > threshold:
            raise ConfigError(
                f"checkpoint loss on task A is {loss_a:.4f} > mix.pretrain_loss="
                f"{threshold}; pre-train on task A first (sharpline train) or "
                "lower the threshold")
        return params, loss_a

    params = modelmod.init_params(spec)
    pre_opt = optmod.OptimizerConfig(kind="gd", lr=cfg["mix.pretrain_lr"])
    state = optmod.init_state(params.size)
    loss_a = modelmod.loss(params, spec, eval_a)
    for k in range(cfg["mix.pretrain_steps"]):
        batch = datamod.generate(task_a, k * cfg["mix.batch_size"],
                                 cfg["mix.batch_size"], tag="A")
        loss_k, grad = modelmod.loss_and_gradient(params, spec, batch)
        # stop below 0.9x the target so the held-out loss clears the threshold
        if threshold > 0 and loss_k < 0.9 * threshold:
            break
        params, state, _ = optmod.step(pre_opt, state, params, grad)
    loss_a = modelmod.loss(params, spec, eval_a)
    if threshold > 0 and loss_a > threshold:
        raise ConfigError(
            f"in-run pre-training stopped at task-A loss {loss_a:.4f} > "
            f"mix.pretrain_loss={threshold}; raise mix.pretrain_steps")
    return params, loss_a


def _sweep_point(cfg, spec, opt_cfg, settings, params, mix, eval_a, eval_b,
                 probelog):
    warm_state = optmod.warmup_moments(
        opt_cfg, optmod.init_state(params.size), params, spec,
        lambda k: datamod.mix_batch(mix, k), cfg["mix.warmup_steps"])
    lam_a, lam_b = [], []
    deg_a = deg_b = 0
    warm_eta = {"A": None, "B": None}
    state = warm_state
    for j in range(cfg["mix.probe_batches"]):
        batch = datamod.mix_batch(mix, cfg["mix.warmup_steps"] + j)
        grad = modelmod.gradient(params, spec, batch)
        _, state, direction = optmod.step(opt_cfg, state, params, grad)
        for tag, eval_batch, out, count in (("A", eval_a, lam_a, "a"),
                                            ("B", eval_b, lam_b, "b")):
            eta0 = warm_eta[tag]
            probe_settings = settings if eta0 is None else probemod.ProbeSettings(
                eta0=eta0, epsilon=settings.epsilon,
                max_expo_iters=settings.max_expo_iters)
            probe = modelmod.make_probe(
                params, spec, eval_batch, direction.delta,
                loss_ids=(tag, f"mix:{mix.ratio!r}"))
            est = probemod.relative_critical_lr(probe, probe_settings,
                                                warm_started=eta0 is not None)
            probelog.write(_jsonl_record(
                step=j, kind="relative", eta_c=est.eta_c, lambda_c=est.lambda_c,
                eta_lower=est.bracket.eta_lower, eta_upper=est.bracket.eta_upper,
                forward_passes=est.forward_passes, degenerate=est.degenerate,
                warm_started=est.warm_started, loss_ids=list(est.loss_ids),
                rho=mix.ratio, two_over_eta=None, threshold=None) + "\n")
            if est.degenerate:
                if tag == "A":
                    deg_a += 1
                else:
                    deg_b += 1
            else:
                out.append(est.lambda_c)
                warm_eta[tag] = est.eta_c
    return lam_a, lam_b, deg_a, deg_b
