"""Matplotlib rendering of sweep reports to PNG files.

Uses the Agg backend so figures render headlessly next to the delimited
output files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import SweepResult, arch_label

_FIG_SIZE = (7.0, 4.5)
_DPI = 120


def plot_loss_difference(diff_by_alpha: dict, path: Path) -> Path:
    """Per-step mean validation-loss difference gd - cdt, one line per alpha."""
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    for alpha, (steps, values, marker) in sorted(diff_by_alpha.items()):
        label = f"alpha={alpha:g}" + (f" ({marker})" if marker else "")
        ax.plot(steps, values, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("mean val loss difference (gd - cdt)")
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_sample_evolution(rows: list[dict], path: Path) -> Path:
    """Output trajectories of a few training samples under both methods."""
    samples = sorted({r["sample"] for r in rows})
    fig, axes = plt.subplots(
        len(samples), 1, figsize=(_FIG_SIZE[0], 2.0 * len(samples)), sharex=True, squeeze=False
    )
    for ax, s in zip(axes[:, 0], samples):
        sub = [r for r in rows if r["sample"] == s]
        steps = [r["step"] for r in sub]
        ax.plot(steps, [r["yhat_gd"] for r in sub], label="gd")
        ax.plot(steps, [r["yhat_cdt"] for r in sub], label="cdt")
        ax.plot(steps, [r["ybar_cdt"] for r in sub], linestyle=":", label="ybar (cdt)")
        ax.axhline(sub[0]["y_true"], color="black", linewidth=0.6, linestyle="--", label="y")
        ax.set_ylabel(f"sample {s}")
        ax.grid(True, alpha=0.3)
    axes[0, 0].legend(fontsize=7, ncol=4)
    axes[-1, 0].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_val_loss_curves(result: SweepResult, arch_index: int, path: Path) -> Path:
    """Mean validation loss per (method, alpha) over converged seeds."""
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    for alpha in result.plan.alphas:
        for method in result.plan.methods:
            traces = [
                r.trace
                for r in result.runs
                if r.arch_index == arch_index
                and r.alpha == alpha
                and r.method == method
                and r.trace is not None
                and not r.diverged
            ]
            if not traces:
                continue
            horizon = min(t.val_loss.shape[0] for t in traces)
            mean = np.mean([t.val_loss[:horizon] for t in traces], axis=0)
            ax.plot(np.arange(horizon), mean, label=f"{method} alpha={alpha:g}")
    ax.set_xlabel("step")
    ax.set_ylabel("mean validation loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_all(result: SweepResult, out_dir: Path, diff_data: dict, sample_data: dict) -> list[Path]:
    """Render every figure kind for the sweep; returns written paths."""
    written: list[Path] = []
    by_arch: dict[int, dict] = {}
    for (arch_index, alpha), series in diff_data.items():
        by_arch.setdefault(arch_index, {})[alpha] = series
    for arch_index, diffs in by_arch.items():
        label = arch_label(result.plan.architectures[arch_index])
        written.append(plot_loss_difference(diffs, out_dir / f"fig_loss_diff_{label}.png"))
    for (arch_index, alpha), rows in sample_data.items():
        label = arch_label(result.plan.architectures[arch_index])
        written.append(
            plot_sample_evolution(rows, out_dir / f"fig_samples_{label}_a{alpha:g}_s0.png")
        )
    for arch_index in range(len(result.plan.architectures)):
        if any(r.trace is not None for r in result.runs if r.arch_index == arch_index):
            label = arch_label(result.plan.architectures[arch_index])
            written.append(
                plot_val_loss_curves(result, arch_index, out_dir / f"fig_val_loss_{label}.png")
            )
    return written
