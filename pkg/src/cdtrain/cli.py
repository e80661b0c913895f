"""Command-line interface.

Subcommands:
  analyze        stability/reachability report for each configured alpha
  train          one training run (gd or cdt) with the first derived seed
  sweep          full plan: runs, delimited reports and figures
  export-kernel  dense tangent-kernel matrix as CSV
  export-gain    Riccati solution P, gain K and closed-loop eigenvalues

Every subcommand takes --config plus the shared --seed / --out-dir /
--format / --verbose flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import analyze as analyze_point
from .config import load_plan
from .control import build_augmented_system, closed_loop, solve_dare
from .datasets import load_dataset
from .experiments import arch_label, derive_run_seeds, run_plan
from .kernel import build_kernel, kernel_diagnostics, save_matrix
from .losses import LossModel
from .network import forward, init_network
from .reports import _write_rows, emit_reports
from .training import TrainerConfig, train


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to a JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out-dir", default=None, help="override the output directory")
    common.add_argument(
        "--format", choices=("csv", "json-lines"), default="csv", help="delimited output format"
    )
    common.add_argument("--verbose", action="store_true", help="print per-run progress")

    parser = argparse.ArgumentParser(
        prog="cdtrain",
        description="Kernel-based training analysis and label-feedback control for descent training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="stability and reachability report")
    p.add_argument("--arch-index", type=int, default=0)

    p = sub.add_parser("train", parents=[common], help="run one training session")
    p.add_argument("--method", choices=("gd", "cdt"), required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--arch-index", type=int, default=0)
    p.add_argument("--steps", type=int, default=None, help="override the configured step count")

    sub.add_parser("sweep", parents=[common], help="run the full experiment plan").add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )

    p = sub.add_parser("export-kernel", parents=[common], help="write the dense kernel matrix")
    p.add_argument("--arch-index", type=int, default=0)

    p = sub.add_parser("export-gain", parents=[common], help="write Riccati solution and gain")
    p.add_argument("--arch-index", type=int, default=0)
    p.add_argument("--alpha", type=float, required=True)
    return parser


def _setup(args):
    plan = load_plan(args.config, seed_override=args.seed, out_dir_override=args.out_dir)
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return plan, out


def _first_run_context(plan, arch_index: int):
    if not 0 <= arch_index < len(plan.architectures):
        raise ValueError(f"arch-index {arch_index} out of range (plan has {len(plan.architectures)})")
    data_seed, init_seed = derive_run_seeds(plan.master_seed, 1)[0]
    batch_train, batch_val = load_dataset(plan.dataset.with_seed(data_seed))
    arch = plan.architectures[arch_index]
    state = init_network(arch, init_seed)
    kernel = build_kernel(state, batch_train)
    return arch, state, kernel, batch_train, batch_val


def _cmd_analyze(args) -> int:
    plan, out = _setup(args)
    arch, state, kernel, batch_train, _ = _first_run_context(plan, args.arch_index)
    diag = kernel_diagnostics(kernel)
    loss = LossModel(plan.loss)
    y_hat = forward(state, batch_train)
    print(
        f"kernel: n={kernel.size} rank={diag.rank} max_eig={diag.max_eig:.6g} "
        f"min_eig={diag.min_eig:.6g} cond={diag.condition_estimate:.6g}"
    )
    rows = []
    header = ("alpha", "radius", "stable", "strict", "safe_alpha", "reachable", "stabilizable")
    print("  ".join(header))
    for alpha in plan.alphas:
        rep = analyze_point(kernel, alpha, loss, y_hat=y_hat, y=batch_train.targets)
        rows.append(
            {
                "alpha": float(alpha),
                "loss": plan.loss,
                "spectral_radius_open_loop": rep.spectral_radius_open_loop,
                "stable": int(bool(rep.stable)),
                "strictly_stable": int(bool(rep.strictly_stable)),
                "safe_alpha_bound": rep.safe_alpha_bound,
                "reachable": int(bool(rep.reachable)),
                "stabilizable": int(bool(rep.stabilizable)),
                "n_unreachable_modes": len(rep.unreachable_modes),
            }
        )
        print(
            f"{alpha:<8g}{rep.spectral_radius_open_loop:<10.4g}{str(rep.stable):<8}"
            f"{str(rep.strictly_stable):<8}{rep.safe_alpha_bound:<12.4g}"
            f"{str(rep.reachable):<11}{rep.stabilizable}"
        )
    path = _write_rows(
        out / f"analysis_{arch_label(arch)}",
        (
            "alpha",
            "loss",
            "spectral_radius_open_loop",
            "stable",
            "strictly_stable",
            "safe_alpha_bound",
            "reachable",
            "stabilizable",
            "n_unreachable_modes",
        ),
        rows,
        args.format,
    )
    print(f"wrote {path}")
    return 0


def _cmd_train(args) -> int:
    plan, out = _setup(args)
    arch, state, kernel, batch_train, batch_val = _first_run_context(plan, args.arch_index)
    steps = plan.steps if args.steps is None else args.steps
    law = None
    if args.method == "cdt":
        system = build_augmented_system(
            kernel, args.alpha, batch_train.targets, plan.q_weight, plan.p, LossModel(plan.loss)
        )
        law = solve_dare(system, max_iters=plan.dare_max_iters, tol=plan.dare_tol)
        if args.verbose:
            print(
                f"feedback law: {law.iterations} iterations, residual {law.dare_residual:.3e}, "
                f"deflated closed-loop radius {law.closed_loop_radius_deflated:.6g}"
            )
    config = TrainerConfig(
        method=args.method,
        alpha0=args.alpha,
        steps=steps,
        loss=plan.loss,
        decay_coeff=plan.decay_coeff,
        p=plan.p,
        divergence_threshold=plan.divergence_threshold,
        snapshot_interval=plan.snapshot_interval,
    )
    trace = train(state, batch_train, batch_val, config, law)
    from .reports import TRACE_COLUMNS, trace_rows
    from .experiments import RunRecord

    record = RunRecord(
        arch_index=args.arch_index,
        arch_label=arch_label(arch),
        seed_index=0,
        data_seed=0,
        init_seed=state.rng_seed or 0,
        alpha=args.alpha,
        method=args.method,
        trace=trace,
        targets=batch_train.targets,
    )
    path = _write_rows(
        out / f"run_{arch_label(arch)}_a{args.alpha:g}_{args.method}_s0",
        TRACE_COLUMNS,
        trace_rows(record),
        args.format,
    )
    status = f"diverged at step {trace.diverged_at}" if trace.diverged else "completed"
    print(
        f"{args.method} {status}: train_loss={trace.train_loss[-1]:.6g} "
        f"val_loss={trace.val_loss[-1]:.6g} ({trace.steps_run} steps)"
    )
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    plan, out = _setup(args)
    result = run_plan(plan, verbose=args.verbose)
    written = emit_reports(result, out, fmt=args.format, figures=not args.no_figures)
    failures = [r for r in result.runs if r.error]
    for r in failures:
        print(
            f"run failed: arch={r.arch_label} seed={r.seed_index} alpha={r.alpha:g} "
            f"method={r.method}: {r.error}",
            file=sys.stderr,
        )
    print(f"wrote {len(written)} files to {out}")
    return 0


def _cmd_export_kernel(args) -> int:
    plan, out = _setup(args)
    arch, _, kernel, _, _ = _first_run_context(plan, args.arch_index)
    diag = kernel_diagnostics(kernel)
    path = out / f"kernel_{arch_label(arch)}.csv"
    save_matrix(path, kernel.theta_matrix)
    print(
        f"wrote {path} (n={kernel.size}, rank={diag.rank}, max_eig={diag.max_eig:.6g}, "
        f"min_eig={diag.min_eig:.6g})"
    )
    return 0


def _cmd_export_gain(args) -> int:
    plan, out = _setup(args)
    arch, _, kernel, batch_train, _ = _first_run_context(plan, args.arch_index)
    system = build_augmented_system(
        kernel, args.alpha, batch_train.targets, plan.q_weight, plan.p, LossModel(plan.loss)
    )
    law = solve_dare(system, max_iters=plan.dare_max_iters, tol=plan.dare_tol)
    info = closed_loop(system, law)
    label = arch_label(arch)
    p_path = out / f"riccati_P_{label}_a{args.alpha:g}.csv"
    k_path = out / f"gain_K_{label}_a{args.alpha:g}.csv"
    save_matrix(p_path, law.P)
    save_matrix(k_path, law.K)
    eig_rows = [
        {"re": float(np.real(z)), "im": float(np.imag(z))} for z in np.sort_complex(info.eigenvalues)
    ]
    e_path = _write_rows(
        out / f"closed_loop_eigenvalues_{label}_a{args.alpha:g}", ("re", "im"), eig_rows, args.format
    )
    print(
        f"solved in {law.iterations} iterations, residual {law.dare_residual:.3e}, "
        f"deflated radius {law.closed_loop_radius_deflated:.6g}, "
        f"structural eigenvalue {info.structural_eigenvalue:.6g}"
    )
    print(f"wrote {p_path}, {k_path}, {e_path}")
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "export-kernel": _cmd_export_kernel,
    "export-gain": _cmd_export_gain,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
