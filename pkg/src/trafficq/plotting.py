"""Figures written to files; nothing is shown interactively."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .agent import RunTrace  # noqa: E402
from .horizon import GenerationLog  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "trafficq",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_queues(trace: RunTrace, path, title: str = "Queue length") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        steps = np.arange(1, trace.horizon + 1)
        for j, road in enumerate(trace.road_ids):
            ax.plot(steps, trace.states[:, j], marker="o", ms=3, label=road)
        ax.set_xlabel("step")
        ax.set_ylabel("queue (veh)")
        ax.set_title(title)
        ax.legend(ncol=4, fontsize=7)
        return _save(fig, path)


def plot_costs(traces: dict[str, RunTrace], path, title: str = "Per-step cost") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for name, trace in traces.items():
            ax.plot(np.arange(1, trace.horizon + 1), trace.costs, marker="s", ms=3, label=name)
        ax.set_xlabel("step")
        ax.set_ylabel("cost")
        ax.set_yscale("symlog", linthresh=1e-2)
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_generations(glog: GenerationLog, path) -> Path:
    recs = glog.records
    n = recs[0].grid.n_intersections
    gens = [r.generation for r in recs]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for i in range(n):
            lo = [r.grid.lo[i] for r in recs]
            hi = [r.grid.hi[i] for r in recs]
            line, = axes[0].plot(gens, lo, drawstyle="steps-post", label=f"I{i + 1}")
            axes[0].plot(gens, hi, drawstyle="steps-post", color=line.get_color())
        axes[0].set_xlabel("generation")
        axes[0].set_ylabel("green interval (s)")
        axes[0].legend(fontsize=7)
        axes[1].plot(gens, [r.greedy_cost for r in recs], marker="o", ms=3, label="greedy")
        axes[1].plot(gens, [r.best_cost for r in recs], ls="--", label="best so far")
        axes[1].set_yscale("symlog", linthresh=1e-2)
        axes[1].set_xlabel("generation")
        axes[1].set_ylabel("6-step cost")
        axes[1].legend(fontsize=7)
        return _save(fig, path)


def plot_sweep(result, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 3.5))
        steps = np.arange(1, result.step_costs.shape[1] + 1)
        for pct, row in zip(result.pcts, result.step_costs):
            a0.plot(steps, row, marker="o", ms=3, label=f"{pct:g}%")
        a0.set_yscale("symlog", linthresh=1e-2)
        a0.set_xlabel("step")
        a0.set_ylabel("mean cost")
        a0.legend(fontsize=7)
        a1.bar([f"{p:g}" for p in result.pcts], result.overflow_frac, color="tab:red")
        a1.set_ylim(0, 1)
        a1.set_xlabel(f"{result.axis} uncertainty (%)")
        a1.set_ylabel("overflow fraction")
        return _save(fig, path)
