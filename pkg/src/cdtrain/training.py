"""Gradient-descent and label-feedback training loops.

Both methods run full-batch descent with the decayed step size
alpha_k = alpha0 / (1 + decay_coeff * k).  The decay applies to the
parameter update only; a feedback law synthesized at k0 stays constant and
does not model it.  Divergence is detected by a loss threshold and
truncates the trace at the triggering step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .control import FeedbackLaw
from .losses import LOSS_KINDS, LossModel
from .network import Batch, NetworkState, backprop, check_batch, forward

METHODS = ("gd", "cdt")


class DivergenceError(RuntimeError):
    """An update produced non-finite gradients or parameters."""


@dataclass(frozen=True)
class TrainerConfig:
    method: str
    alpha0: float
    steps: int
    loss: str = "mse"
    decay_coeff: float = 0.01
    p: float = 0.1
    divergence_threshold: float = 1e12
    snapshot_interval: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.alpha0 <= 0.0:
            raise ValueError("alpha0 must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.decay_coeff < 0.0:
            raise ValueError("decay_coeff must be non-negative")
        if self.p <= 0.0:
            raise ValueError("p must be positive")
        if self.divergence_threshold <= 0.0:
            raise ValueError("divergence_threshold must be positive")
        if self.snapshot_interval < 1:
            raise ValueError("snapshot_interval must be >= 1")


def learning_rate(config: TrainerConfig, k: int) -> float:
    """alpha_k = alpha0 / (1 + decay_coeff * k)."""
    return config.alpha0 / (1.0 + config.decay_coeff * k)


@dataclass
class TrainingTrace:
    """Per-step record of one run; arrays all share the same row count.

    Rows cover steps 0..steps_run, where row 0 is the untouched
    initialization.  ``ybar_dev_norm`` is the realized shifted-label
    deviation ||y_bar - y||; it agrees with ``yu_norm`` up to rounding
    since y_bar = y + y_u.  Snapshots map step -> stacked train outputs
    (and control signals for cdt).
    """

    method: str
    alpha0: float
    loss_kind: str
    seed: int | None
    train_loss: np.ndarray
    val_loss: np.ndarray
    yu_norm: np.ndarray
    ybar_dev_norm: np.ndarray
    theta_disp_norm: np.ndarray
    step_time: np.ndarray
    snapshots: dict = field(default_factory=dict)
    yu_snapshots: dict = field(default_factory=dict)
    diverged: bool = False
    diverged_at: int | None = None
    final_state: NetworkState | None = None

    @property
    def steps_run(self) -> int:
        return self.train_loss.shape[0] - 1


def _descent_update(
    state: NetworkState, batch: Batch, loss: LossModel, targets: np.ndarray, alpha_k: float, y_hat: np.ndarray
) -> NetworkState:
    grad_out = loss.gradient(y_hat, targets)
    grad_theta = backprop(state, batch, grad_out)
    if not np.all(np.isfinite(grad_theta)):
        raise DivergenceError("parameter gradient became non-finite")
    theta_new = state.theta - alpha_k * grad_theta
    if not np.all(np.isfinite(theta_new)):
        raise DivergenceError("parameters became non-finite")
    return state.with_theta(theta_new)


def gd_step(
    state: NetworkState,
    batch: Batch,
    loss: LossModel | str,
    alpha_k: float,
    y_hat: np.ndarray | None = None,
) -> NetworkState:
    """One plain descent step theta <- theta - alpha_k * J^T dL/dy."""
    loss = LossModel(loss) if isinstance(loss, str) else loss
    if y_hat is None:
        y_hat = forward(state, batch)
    return _descent_update(state, batch, loss, batch.targets, alpha_k, y_hat)


def cdt_step(
    state: NetworkState,
    batch: Batch,
    loss: LossModel | str,
    law: FeedbackLaw,
    alpha_k: float,
    y_hat: np.ndarray | None = None,
):
    """One label-feedback step: descend against y_bar = y + y_u, y_u = -K [y_hat; 1].

    Returns (new_state, y_u, y_bar).
    """
    loss = LossModel(loss) if isinstance(loss, str) else loss
    if y_hat is None:
        y_hat = forward(state, batch)
    n = batch.targets.shape[0]
    if law.K.shape != (n, n + 1):
        raise ValueError(f"gain shape {law.K.shape} does not match output dimension {n}")
    y_u = -(law.K @ np.append(y_hat, 1.0))
    y_bar = batch.targets + y_u
    new_state = _descent_update(state, batch, loss, y_bar, alpha_k, y_hat)
    return new_state, y_u, y_bar


def train(
    state: NetworkState,
    batch_train: Batch,
    batch_val: Batch,
    config: TrainerConfig,
    law: FeedbackLaw | None = None,
) -> TrainingTrace:
    """Run the configured method for config.steps updates.

    A feedback law must be supplied exactly when method == "cdt".  The
    trace records losses before each update, so steps=0 still yields the
    initial row.  On divergence the trace is truncated at the triggering
    step and flagged.
    """
    if config.method == "cdt" and law is None:
        raise ValueError("cdt training requires a feedback law")
    if config.method == "gd" and law is not None:
        raise ValueError("gd training takes no feedback law")
    check_batch(state.spec, batch_train)
    check_batch(state.spec, batch_val)
    loss = LossModel(config.loss)
    n = batch_train.targets.shape[0]
    if law is not None and law.K.shape != (n, n + 1):
        raise ValueError(f"gain shape {law.K.shape} does not match train batch dimension {n}")

    theta0 = state.theta
    cur = state
    rows_train, rows_val, rows_yu, rows_dev, rows_disp, rows_time = [], [], [], [], [], []
    snapshots: dict[int, np.ndarray] = {}
    yu_snapshots: dict[int, np.ndarray] = {}
    diverged = False
    diverged_at: int | None = None

    for k in range(config.steps + 1):
        tic = time.perf_counter()
        y_hat = forward(cur, batch_train)
        finite = bool(np.all(np.isfinite(y_hat)))
        train_loss = loss.value(y_hat, batch_train.targets) if finite else float("inf")
        if finite:
            y_val = forward(cur, batch_val)
            val_loss = (
                loss.value(y_val, batch_val.targets) if np.all(np.isfinite(y_val)) else float("inf")
            )
        else:
            val_loss = float("inf")
        if config.method == "cdt" and finite:
            y_u = -(law.K @ np.append(y_hat, 1.0))
        else:
            y_u = np.zeros(n)
        y_bar = batch_train.targets + y_u
        yu_norm = float(np.linalg.norm(y_u))
        rows_train.append(train_loss)
        rows_val.append(val_loss)
        rows_yu.append(yu_norm)
        rows_dev.append(float(np.linalg.norm(y_bar - batch_train.targets)))
        rows_disp.append(float(np.linalg.norm(cur.theta - theta0)))
        if k % config.snapshot_interval == 0 or k == config.steps:
            if finite:
                snapshots[k] = y_hat.copy()
                if config.method == "cdt":
                    yu_snapshots[k] = y_u.copy()
        bad = (
            not np.isfinite(train_loss)
            or not np.isfinite(val_loss)
            or train_loss > config.divergence_threshold
            or val_loss > config.divergence_threshold
        )
        rows_time.append(time.perf_counter() - tic)
        if bad:
            diverged = True
            diverged_at = k
            break
        if k == config.steps:
            break
        alpha_k = learning_rate(config, k)
        try:
            if config.method == "gd":
                cur = gd_step(cur, batch_train, loss, alpha_k, y_hat=y_hat)
            else:
                cur, _, _ = cdt_step(cur, batch_train, loss, law, alpha_k, y_hat=y_hat)
        except DivergenceError:
            diverged = True
            diverged_at = k + 1
            break

    return TrainingTrace(
        method=config.method,
        alpha0=config.alpha0,
        loss_kind=config.loss,
        seed=state.rng_seed,
        train_loss=np.asarray(rows_train),
        val_loss=np.asarray(rows_val),
        yu_norm=np.asarray(rows_yu),
        ybar_dev_norm=np.asarray(rows_dev),
        theta_disp_norm=np.asarray(rows_disp),
        step_time=np.asarray(rows_time),
        snapshots=snapshots,
        yu_snapshots=yu_snapshots,
        diverged=diverged,
        diverged_at=diverged_at,
        final_state=cur,
    )
