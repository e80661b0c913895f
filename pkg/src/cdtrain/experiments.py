"""Sweep harness: architectures x step sizes x methods x seeds.

Each seed gets its own data shuffle and initialization, both derived
deterministically from the master seed.  Per (architecture, seed) the
kernel is built once at initialization; analysis verdicts are computed per
step size, and feedback laws are solved once per (architecture, seed,
alpha, p) and cached.  Individual run failures are recorded, not raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import reachability_check, stability_check
from .control import build_augmented_system, solve_dare
from .datasets import DatasetSpec, load_dataset
from .kernel import build_kernel
from .losses import LossModel
from .network import Batch, NetworkSpec, init_network
from .training import METHODS, TrainerConfig, TrainingTrace, train


@dataclass
class ExperimentPlan:
    dataset: DatasetSpec
    architectures: list[NetworkSpec]
    alphas: list[float]
    methods: tuple[str, ...] = ("gd", "cdt")
    n_seeds: int = 10
    steps: int = 200
    loss: str = "mse"
    q_weight: float = 1.0
    p: float = 0.1
    decay_coeff: float = 0.01
    divergence_threshold: float = 1e12
    master_seed: int = 0
    dare_tol: float = 1e-10
    dare_max_iters: int = 100000
    snapshot_interval: int = 1
    sample_trace_count: int = 4
    out_dir: str = "results"

    def __post_init__(self) -> None:
        if not self.architectures:
            raise ValueError("plan needs at least one architecture")
        if not self.alphas or any(a <= 0.0 for a in self.alphas):
            raise ValueError("alphas must be a non-empty list of positive step sizes")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        LossModel(self.loss)


def derive_run_seeds(master_seed: int, n_seeds: int) -> list[tuple[int, int]]:
    """Per-run (data_seed, init_seed) pairs spawned from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    pairs = []
    for child in ss.spawn(n_seeds):
        state = child.generate_state(2)
        pairs.append((int(state[0]), int(state[1])))
    return pairs


def arch_label(spec: NetworkSpec) -> str:
    return "-".join(str(w) for w in spec.widths)


@dataclass
class RunRecord:
    arch_index: int
    arch_label: str
    seed_index: int
    data_seed: int
    init_seed: int
    alpha: float
    method: str
    trace: TrainingTrace | None = None
    error: str | None = None
    final_val_loss: float = math.nan
    diverged: bool = False
    stable: bool | None = None
    strictly_stable: bool | None = None
    reachable: bool | None = None
    stabilizable: bool | None = None
    safe_alpha_bound: float = math.nan
    spectral_radius: float = math.nan
    targets: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.error is None and not self.diverged


@dataclass
class SummaryRow:
    arch_label: str
    alpha: float
    method: str
    reachability: str
    stability: str
    convergence: str
    n_converged: int
    n_seeds: int
    final_val_loss_mean: float
    final_val_loss_std: float


@dataclass
class SweepResult:
    plan: ExperimentPlan
    runs: list[RunRecord] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)


def _mixed_verdict(flags: list[bool | None]) -> str:
    known = [bool(f) for f in flags if f is not None]
    if not known:
        return "n/a"
    k = sum(known)
    if k == len(known):
        return "Yes"
    if k == 0:
        return "No"
    return f"Mixed ({k}/{len(known)})"


def _convergence_verdict(n_conv: int, n_total: int) -> str:
    if n_conv == n_total:
        return "All initializations"
    if n_conv == 0:
        return "No initializations"
    return f"Some initializations ({n_conv}/{n_total})"


def summarize(plan: ExperimentPlan, runs: list[RunRecord]) -> list[SummaryRow]:
    """Aggregate runs over seeds into per (architecture, alpha, method) rows.

    The mean and sample stddev cover converged runs only; with no
    converged run both are infinite.  A single converged run reports
    stddev 0 by convention.
    """
    rows = []
    for arch_index, arch in enumerate(plan.architectures):
        for alpha in plan.alphas:
            for method in plan.methods:
                group = [
                    r
                    for r in runs
                    if r.arch_index == arch_index and r.alpha == alpha and r.method == method
                ]
                if not group:
                    continue
                conv = [r for r in group if r.converged]
                losses = [r.final_val_loss for r in conv]
                if losses:
                    mean = float(np.mean(losses))
                    std = float(np.std(losses, ddof=1)) if len(losses) > 1 else 0.0
                else:
                    mean = math.inf
                    std = math.inf
                rows.append(
                    SummaryRow(
                        arch_label=arch_label(arch),
                        alpha=alpha,
                        method=method,
                        reachability=_mixed_verdict([r.reachable for r in group]),
                        stability=_mixed_verdict([r.stable for r in group]),
                        convergence=_convergence_verdict(len(conv), len(group)),
                        n_converged=len(conv),
                        n_seeds=len(group),
                        final_val_loss_mean=mean,
                        final_val_loss_std=std,
                    )
                )
    return rows


def run_plan(plan: ExperimentPlan, verbose: bool = False) -> SweepResult:
    """Execute the full sweep; per-run failures are recorded, not raised."""
    runs: list[RunRecord] = []
    seed_pairs = derive_run_seeds(plan.master_seed, plan.n_seeds)
    loss = LossModel(plan.loss)
    for arch_index, arch in enumerate(plan.architectures):
        label = arch_label(arch)
        for seed_index, (data_seed, init_seed) in enumerate(seed_pairs):
            batch_train, batch_val = load_dataset(plan.dataset.with_seed(data_seed))
            if batch_train.inputs.shape[1] != arch.input_dim:
                raise ValueError(
                    f"architecture {label} expects {arch.input_dim} inputs but the dataset "
                    f"has {batch_train.inputs.shape[1]} features"
                )
            state0 = init_network(arch, init_seed)
            kernel = build_kernel(state0, batch_train)
            law_cache: dict = {}
            for alpha in plan.alphas:
                stab = stability_check(kernel, alpha, loss)
                reach = reachability_check(kernel, alpha)
                for method in plan.methods:
                    record = RunRecord(
                        arch_index=arch_index,
                        arch_label=label,
                        seed_index=seed_index,
                        data_seed=data_seed,
                        init_seed=init_seed,
                        alpha=alpha,
                        method=method,
                        stable=stab.stable,
                        strictly_stable=stab.strictly_stable,
                        reachable=reach.reachable,
                        stabilizable=reach.stabilizable,
                        safe_alpha_bound=stab.safe_alpha_bound,
                        spectral_radius=stab.spectral_radius_open_loop,
                        targets=batch_train.targets,
                    )
                    try:
                        law = None
                        if method == "cdt":
                            key = (arch_index, seed_index, alpha, plan.p)
                            if key not in law_cache:
                                system = build_augmented_system(
                                    kernel,
                                    alpha,
                                    batch_train.targets,
                                    q_weight=plan.q_weight,
                                    r_weight=plan.p,
                                    loss=loss,
                                )
                                law_cache[key] = solve_dare(
                                    system, max_iters=plan.dare_max_iters, tol=plan.dare_tol
                                )
                            law = law_cache[key]
                        config = TrainerConfig(
                            method=method,
                            alpha0=alpha,
                            steps=plan.steps,
                            loss=plan.loss,
                            decay_coeff=plan.decay_coeff,
                            p=plan.p,
                            divergence_threshold=plan.divergence_threshold,
                            snapshot_interval=plan.snapshot_interval,
                        )
                        trace = train(state0, batch_train, batch_val, config, law)
                        record.trace = trace
                        record.diverged = trace.diverged
                        record.final_val_loss = float(trace.val_loss[-1])
                    except Exception as exc:  # noqa: BLE001 - per-run fault isolation
                        record.error = f"{type(exc).__name__}: {exc}"
                    runs.append(record)
                    if verbose:
                        status = record.error or ("diverged" if record.diverged else "ok")
                        print(
                            f"[run] arch={label} seed={seed_index} alpha={alpha:g} "
                            f"method={method}: {status}"
                        )
    return SweepResult(plan=plan, runs=runs, summary=summarize(plan, runs))
