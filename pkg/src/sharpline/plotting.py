"""Deterministic SVG renderings of run logs.

matplotlib is pinned to a fixed hash salt, text-element fonts, and a stripped
Date field so the same log always produces byte-identical SVG output.
"""

from __future__ import annotations

import csv
import json
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ConfigError  # noqa: E402

PLOT_KINDS = ("sharpness-vs-step", "boundary-map", "sweep")

matplotlib.rcParams["svg.hashsalt"] = "sharpline"
matplotlib.rcParams["svg.fonttype"] = "none"

_COLORS = {"critical": "#1f77b4", "directional": "#ff7f0e",
           "hessian": "#2ca02c", "preconditioned": "#d62728"}


def _save(fig, out_path: str):
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _read_csv(path: str, required: set[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = required - set(reader.fieldnames)
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)


def plot_sharpness_vs_step(log_path: str, out_path: str):
    """Sharpness measures vs training step, with dashed stability lines."""
    records = _read_jsonl(log_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.set_xlabel("step")
    ax.set_ylabel("sharpness")
    by_kind: dict[str, tuple[list, list]] = {}
    for rec in records:
        lam = rec.get("lambda_c")
        if lam is None or not math.isfinite(lam):
            continue
        xs, ys = by_kind.setdefault(rec["kind"], ([], []))
        xs.append(rec["step"])
        ys.append(lam)
    for kind in sorted(by_kind):
        xs, ys = by_kind[kind]
        ax.plot(xs, ys, label=kind, color=_COLORS.get(kind), linewidth=1.2)
    if records:
        two_over_eta = records[0].get("two_over_eta")
        threshold = records[0].get("threshold")
        if two_over_eta is not None:
            ax.axhline(two_over_eta, linestyle="--", color="black",
                       linewidth=1.0, label="2/lr")
        if threshold is not None and threshold != two_over_eta:
            ax.axhline(threshold, linestyle="--", color="gray",
                       linewidth=1.0, label="stability threshold")
        ax.legend(loc="best", fontsize=8)
    _save(fig, out_path)


def plot_boundary_map(csv_path: str, out_path: str):
    """Predicted vs empirically bisected stability boundary, per optimizer."""
    rows = _read_csv(csv_path, {"optimizer", "predicted_threshold",
                                "empirical_boundary"})
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    ax.set_xlabel("predicted threshold")
    ax.set_ylabel("empirical boundary")
    pts: dict[str, tuple[list, list]] = {}
    for row in rows:
        try:
            pred = float(row["predicted_threshold"])
            emp = float(row["empirical_boundary"])
        except ValueError:
            continue
        if not (math.isfinite(pred) and math.isfinite(emp)):
            continue
        xs, ys = pts.setdefault(row["optimizer"], ([], []))
        xs.append(pred)
        ys.append(emp)
    all_x = [x for xs, _ in pts.values() for x in xs]
    if all_x:
        lo, hi = min(all_x), max(all_x)
        ax.plot([lo, hi], [lo, hi], linestyle="--", color="black", linewidth=1.0)
        ax.set_xscale("log")
        ax.set_yscale("log")
    for opt in sorted(pts):
        xs, ys = pts[opt]
        ax.plot(xs, ys, "o", markersize=4, label=opt)
    if pts:
        ax.legend(loc="best", fontsize=8)
    _save(fig, out_path)


def plot_sweep(csv_path: str, out_path: str):
    """Relative critical sharpness vs mix ratio, one polyline per probed loss."""
    rows = _read_csv(csv_path, {"rho", "lambda_a_mean", "lambda_a_sd",
                                "lambda_b_mean", "lambda_b_sd"})
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.set_xlabel("mix ratio (task-A fraction)")
    ax.set_ylabel("relative critical sharpness")
    series = {"task A": ("lambda_a_mean", "lambda_a_sd"),
              "task B": ("lambda_b_mean", "lambda_b_sd")}
    for label in sorted(series):
        mean_col, sd_col = series[label]
        xs, ys, errs = [], [], []
        for row in rows:
            try:
                y = float(row[mean_col])
            except ValueError:
                continue
            if not math.isfinite(y):
                continue
            xs.append(float(row["rho"]))
            ys.append(y)
            try:
                errs.append(float(row[sd_col]))
            except ValueError:
                errs.append(0.0)
        if xs:
            ax.errorbar(xs, ys, yerr=errs, marker="o", markersize=4,
                        capsize=3, label=label)
    if rows:
        ax.set_yscale("log")
        ax.legend(loc="best", fontsize=8)
    _save(fig, out_path)


def render(log_path: str, kind: str, out_path: str):
    if kind == "sharpness-vs-step":
        plot_sharpness_vs_step(log_path, out_path)
    elif kind == "boundary-map":
        plot_boundary_map(log_path, out_path)
    elif kind == "sweep":
        plot_sweep(log_path, out_path)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
