"""Controlled descent training.

Models full-batch gradient descent of a finite-width network as a linear
system in output space through the empirical tangent kernel, analyzes its
stability and reachability, and synthesizes an optimal label-feedback law
that keeps training convergent at step sizes where plain descent diverges.
"""

from .analysis import (
    AnalysisReport,
    LossBoundednessVerdict,
    analyze,
    curvature_estimate,
    equilibrium_classify,
    lagrange_bound,
    loss_boundedness,
    pbh_unreachable_modes,
    reachability_check,
    stability_check,
    validity_monitor,
)
from .control import (
    AugmentedSystem,
    ClosedLoopInfo,
    ConditioningError,
    DareConvergenceError,
    FeedbackLaw,
    build_augmented_system,
    closed_loop,
    dare_iteration,
    deflated_spectral_radius,
    simulate_local,
    solve_dare,
)
from .datasets import CsvSource, DatasetSpec, SyntheticSource, load_dataset
from .experiments import (
    ExperimentPlan,
    RunRecord,
    SummaryRow,
    SweepResult,
    derive_run_seeds,
    run_plan,
    summarize,
)
from .kernel import (
    EigendecompositionError,
    Kernel,
    KernelDiagnostics,
    build_kernel,
    kernel_diagnostics,
    save_matrix,
)
from .losses import LOSS_KINDS, LossModel
from .network import (
    ACTIVATIONS,
    INIT_SCHEMES,
    Batch,
    NetworkSpec,
    NetworkState,
    backprop,
    forward,
    init_network,
    jacobian,
    unpack_params,
)
from .reports import emit_reports, loss_difference_series, render_summary_table
from .training import (
    DivergenceError,
    TrainerConfig,
    TrainingTrace,
    cdt_step,
    gd_step,
    learning_rate,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "AnalysisReport",
    "AugmentedSystem",
    "Batch",
    "ClosedLoopInfo",
    "ConditioningError",
    "CsvSource",
    "DareConvergenceError",
    "DatasetSpec",
    "DivergenceError",
    "EigendecompositionError",
    "ExperimentPlan",
    "FeedbackLaw",
    "INIT_SCHEMES",
    "Kernel",
    "KernelDiagnostics",
    "LOSS_KINDS",
    "LossBoundednessVerdict",
    "LossModel",
    "NetworkSpec",
    "NetworkState",
    "RunRecord",
    "SummaryRow",
    "SweepResult",
    "SyntheticSource",
    "TrainerConfig",
    "TrainingTrace",
    "analyze",
    "backprop",
    "build_augmented_system",
    "build_kernel",
    "cdt_step",
    "closed_loop",
    "curvature_estimate",
    "dare_iteration",
    "deflated_spectral_radius",
    "derive_run_seeds",
    "emit_reports",
    "equilibrium_classify",
    "forward",
    "gd_step",
    "init_network",
    "jacobian",
    "kernel_diagnostics",
    "lagrange_bound",
    "learning_rate",
    "load_dataset",
    "loss_boundedness",
    "loss_difference_series",
    "pbh_unreachable_modes",
    "reachability_check",
    "render_summary_table",
    "run_plan",
    "save_matrix",
    "simulate_local",
    "solve_dare",
    "stability_check",
    "summarize",
    "train",
    "unpack_params",
    "validity_monitor",
]
