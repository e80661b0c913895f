"""Report files for sweep results: delimited data, tables and figures.

All delimited output is deterministic: fixed row order, fixed column
order, full-precision ``%.17g`` floats and no timestamps, so repeated
sweeps with equal seeds produce byte-identical files.  ``fmt`` selects
comma-separated values ("csv") or one JSON object per line ("json-lines").
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .experiments import RunRecord, SweepResult, arch_label

TRACE_COLUMNS = ("step", "method", "alpha0", "seed", "train_loss", "val_loss", "yu_norm", "diverged")

FORMATS = ("csv", "json-lines")


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, columns: tuple[str, ...], rows: list[dict], fmt: str) -> Path:
    # Stems contain dots (alpha values), so the extension is appended rather
    # than set with with_suffix.
    if fmt == "csv":
        path = path.parent / (path.name + ".csv")
        lines = [",".join(columns)]
        for row in rows:
            cells = []
            for c in columns:
                v = row[c]
                cells.append(_fmt_float(v) if isinstance(v, float) else str(v))
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json-lines":
        path = path.parent / (path.name + ".jsonl")
        with path.open("w") as fh:
            for row in rows:
                fh.write(json.dumps({c: row[c] for c in columns}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return path


def _alpha_tag(alpha: float) -> str:
    return format(alpha, "g")


def trace_rows(record: RunRecord) -> list[dict]:
    t = record.trace
    rows = []
    for k in range(t.train_loss.shape[0]):
        rows.append(
            {
                "step": k,
                "method": t.method,
                "alpha0": float(t.alpha0),
                "seed": record.seed_index,
                "train_loss": float(t.train_loss[k]),
                "val_loss": float(t.val_loss[k]),
                "yu_norm": float(t.yu_norm[k]),
                "diverged": int(t.diverged and t.diverged_at == k),
            }
        )
    return rows


def loss_difference_series(result: SweepResult, arch_index: int, alpha: float):
    """Mean per-step validation-loss difference gd - cdt, paired by seed.

    The series stops at the first step where any paired run diverged; the
    marker on the last row names the method that went first.  Returns
    (steps, values, marker) or None when a method is missing entirely.
    """
    gd = {
        r.seed_index: r.trace
        for r in result.runs
        if r.arch_index == arch_index and r.alpha == alpha and r.method == "gd" and r.trace is not None
    }
    cdt = {
        r.seed_index: r.trace
        for r in result.runs
        if r.arch_index == arch_index and r.alpha == alpha and r.method == "cdt" and r.trace is not None
    }
    seeds = sorted(set(gd) & set(cdt))
    if not seeds:
        return None
    horizon = math.inf
    marker = ""
    for s in seeds:
        for t, name in ((gd[s], "gd_diverged"), (cdt[s], "cdt_diverged")):
            end = t.diverged_at if t.diverged else t.train_loss.shape[0] - 1
            if end < horizon:
                horizon = end
                marker = name if t.diverged else ""
    horizon = int(horizon)
    steps = np.arange(horizon + 1)
    diffs = np.zeros(horizon + 1)
    for s in seeds:
        diffs += gd[s].val_loss[: horizon + 1] - cdt[s].val_loss[: horizon + 1]
    diffs /= len(seeds)
    return steps, diffs, marker


def sample_evolution_rows(result: SweepResult, arch_index: int, alpha: float, seed_index: int, count: int):
    """Per-step outputs of selected training samples under both methods.

    Rows pair the gd and cdt snapshots at common steps and add the true
    label and the controlled label y_bar = y + y_u.  ``sample`` indexes the
    stacked data-major output vector.
    """
    recs = {
        r.method: r
        for r in result.runs
        if r.arch_index == arch_index
        and r.alpha == alpha
        and r.seed_index == seed_index
        and r.trace is not None
    }
    if "gd" not in recs or "cdt" not in recs:
        return []
    gd_t, cdt_t = recs["gd"].trace, recs["cdt"].trace
    y = recs["gd"].targets
    n = y.shape[0]
    count = min(count, n)
    steps = sorted(set(gd_t.snapshots) & set(cdt_t.snapshots))
    rows = []
    for k in steps:
        yu = cdt_t.yu_snapshots.get(k, np.zeros(n))
        for i in range(count):
            rows.append(
                {
                    "step": k,
                    "sample": i,
                    "y_true": float(y[i]),
                    "yhat_gd": float(gd_t.snapshots[k][i]),
                    "yhat_cdt": float(cdt_t.snapshots[k][i]),
                    "ybar_cdt": float(y[i] + yu[i]),
                }
            )
    return rows


def _loss_pm(mean: float, std: float) -> str:
    if math.isinf(mean):
        return "inf +- inf"
    return f"{mean:.4e} +- {std:.3e}"


def render_summary_table(result: SweepResult) -> str:
    """Human-readable sweep table, one block per architecture."""
    header = ("alpha", "method", "Reachability", "|eig(I-aTheta H)|<1", "Convergence", "Final val loss")
    lines = []
    for label in sorted({row.arch_label for row in result.summary}):
        rows = [r for r in result.summary if r.arch_label == label]
        cells = [header]
        for r in rows:
            cells.append(
                (
                    format(r.alpha, "g"),
                    r.method,
                    r.reachability,
                    r.stability,
                    r.convergence,
                    _loss_pm(r.final_val_loss_mean, r.final_val_loss_std),
                )
            )
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        lines.append(f"architecture {label} ({result.plan.loss} loss, {result.plan.n_seeds} seeds)")
        for j, row in enumerate(cells):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if j == 0:
                lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
        lines.append("")
    return "\n".join(lines)


def emit_reports(
    result: SweepResult,
    out_dir: str | Path | None = None,
    fmt: str = "csv",
    figures: bool = True,
) -> list[Path]:
    """Write summary, per-run traces, difference series, sample traces.

    Returns the list of written paths.  With ``figures`` enabled the same
    series are also rendered to PNG files next to the delimited output.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    out = Path(out_dir if out_dir is not None else result.plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary_cols = (
        "arch",
        "alpha",
        "method",
        "reachability",
        "stability",
        "convergence",
        "n_converged",
        "n_seeds",
        "final_val_loss_mean",
        "final_val_loss_std",
    )
    summary_rows = [
        {
            "arch": r.arch_label,
            "alpha": float(r.alpha),
            "method": r.method,
            "reachability": r.reachability,
            "stability": r.stability,
            "convergence": r.convergence,
            "n_converged": r.n_converged,
            "n_seeds": r.n_seeds,
            "final_val_loss_mean": float(r.final_val_loss_mean),
            "final_val_loss_std": float(r.final_val_loss_std),
        }
        for r in result.summary
    ]
    written.append(_write_rows(out / "summary", summary_cols, summary_rows, fmt))
    table = out / "summary.txt"
    table.write_text(render_summary_table(result))
    written.append(table)

    merged: list[dict] = []
    for record in result.runs:
        if record.trace is None:
            continue
        rows = trace_rows(record)
        name = f"run_{record.arch_label}_a{_alpha_tag(record.alpha)}_{record.method}_s{record.seed_index}"
        written.append(_write_rows(out / name, TRACE_COLUMNS, rows, fmt))
        for row in rows:
            merged.append({"arch": record.arch_label, **row})
    if merged:
        written.append(_write_rows(out / "traces_all", ("arch",) + TRACE_COLUMNS, merged, fmt))

    diff_data = {}
    for arch_index, arch in enumerate(result.plan.architectures):
        for alpha in result.plan.alphas:
            series = loss_difference_series(result, arch_index, alpha)
            if series is None:
                continue
            steps, values, marker = series
            diff_data[(arch_index, alpha)] = series
            rows = [
                {
                    "step": int(k),
                    "loss_diff_mean": float(v),
                    "marker": marker if k == steps[-1] else "",
                }
                for k, v in zip(steps, values)
            ]
            name = f"loss_diff_{arch_label(arch)}_a{_alpha_tag(alpha)}"
            written.append(_write_rows(out / name, ("step", "loss_diff_mean", "marker"), rows, fmt))

    sample_data = {}
    for arch_index, arch in enumerate(result.plan.architectures):
        for alpha in result.plan.alphas:
            rows = sample_evolution_rows(result, arch_index, alpha, 0, result.plan.sample_trace_count)
            if not rows:
                continue
            sample_data[(arch_index, alpha)] = rows
            name = f"samples_{arch_label(arch)}_a{_alpha_tag(alpha)}_s0"
            written.append(
                _write_rows(
                    out / name,
                    ("step", "sample", "y_true", "yhat_gd", "yhat_cdt", "ybar_cdt"),
                    rows,
                    fmt,
                )
            )

    if figures:
        from . import figures as figs

        written.extend(figs.render_all(result, out, diff_data, sample_data))
    return written
