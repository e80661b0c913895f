"""Stability, reachability and linearization-validity analysis.

Training with a frozen kernel is the linear step ``y(k+1) = (I - a*Theta*H) y(k) + ...``
where H is the loss Hessian at the expansion point.  The checks here
classify that step matrix (eigenvalues, PBH rank test), characterize
equilibria of the output dynamics, and bound how long the frozen-kernel
model stays trustworthy for the real network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .kernel import Kernel, RANK_TOL_FACTOR
from .losses import LossModel
from .network import Batch, NetworkState, _forward_theta

# Margin for strict eigenvalue comparisons against the unit circle.
STRICT_EIG_TOL = 1e-9

# Vector-norm threshold below which an equilibrium condition counts as met.
EQUILIBRIUM_TOL = 1e-10

EQUILIBRIUM_CONDITIONS = ("loss_minimum", "frozen", "null_kernel", "gradient_in_nullspace")


@dataclass
class AnalysisReport:
    """Verdicts for one (kernel, alpha, loss) combination.

    Stability-only or reachability-only checks leave the other group of
    fields at None; ``merge`` combines two partial reports.
    """

    alpha: float
    loss_kind: str | None = None
    spectral_radius_open_loop: float = math.nan
    stable: bool | None = None
    strictly_stable: bool | None = None
    safe_alpha_bound: float = math.nan
    reachable: bool | None = None
    stabilizable: bool | None = None
    unreachable_modes: list = field(default_factory=list)
    reason: str | None = None

    def merge(self, other: "AnalysisReport") -> "AnalysisReport":
        out = AnalysisReport(alpha=self.alpha)
        for name in ("loss_kind", "stable", "strictly_stable", "reachable", "stabilizable", "reason"):
            a, b = getattr(self, name), getattr(other, name)
            setattr(out, name, a if a is not None else b)
        out.spectral_radius_open_loop = (
            self.spectral_radius_open_loop
            if not math.isnan(self.spectral_radius_open_loop)
            else other.spectral_radius_open_loop
        )
        out.safe_alpha_bound = (
            self.safe_alpha_bound if not math.isnan(self.safe_alpha_bound) else other.safe_alpha_bound
        )
        out.unreachable_modes = self.unreachable_modes or other.unreachable_modes
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unreachable_modes"] = [
            {"eigenvalue": float(np.real(z)), "defect": int(k)} for z, k in self.unreachable_modes
        ]
        return d


def _scaled_kernel_matrix(kernel: Kernel, loss: LossModel, y_hat, y) -> np.ndarray:
    """Symmetric matrix with the spectrum of Theta * H_L.

    For mse/sse this is h * Theta.  For cross_entropy the product
    Theta * diag(d) shares its spectrum with sqrt(D) Theta sqrt(D), which
    keeps the eigenproblem symmetric.
    """
    n = kernel.size
    h = loss.hessian_scale(n)
    if h is not None:
        return h * kernel.theta_matrix
    if y_hat is None or y is None:
        raise ValueError(f"{loss.kind} stability needs y_hat and y to evaluate the loss Hessian")
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y_hat <= 0.0):
        raise ValueError("cross_entropy requires strictly positive predictions")
    if np.any(y < 0.0):
        raise ValueError("cross_entropy requires non-negative targets")
    s = np.sqrt(y / y_hat**2)
    return kernel.theta_matrix * np.outer(s, s)


def stability_check(
    kernel: Kernel,
    alpha: float,
    loss: LossModel | str = "sse",
    y_hat: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> AnalysisReport:
    """Eigenvalue verdict for the frozen-kernel step matrix I - a*Theta*H.

    ``stable`` allows |eig| <= 1 within 1e-9; ``strictly_stable`` requires
    |eig| < 1 - 1e-9.  ``safe_alpha_bound = 2 / max_eig(Theta * H)`` is the
    largest step size keeping every eigenvalue inside the closed unit disc.
    mae has no curvature almost everywhere, so no eigenvalue argument
    applies and the check reports unstable with a reason.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    loss = LossModel(loss) if isinstance(loss, str) else loss
    if loss.kind == "mae":
        return AnalysisReport(
            alpha=alpha,
            loss_kind="mae",
            stable=False,
            strictly_stable=False,
            reason="exponential boundedness not fulfilled",
        )
    scaled = _scaled_kernel_matrix(kernel, loss, y_hat, y)
    mu = np.linalg.eigvalsh(np.eye(kernel.size) - alpha * scaled)
    radius = float(np.max(np.abs(mu))) if mu.size else 0.0
    mu_max = float(np.linalg.eigvalsh(scaled)[-1]) if kernel.size else 0.0
    return AnalysisReport(
        alpha=alpha,
        loss_kind=loss.kind,
        spectral_radius_open_loop=radius,
        stable=bool(radius <= 1.0 + STRICT_EIG_TOL),
        strictly_stable=bool(radius < 1.0 - STRICT_EIG_TOL),
        safe_alpha_bound=(2.0 / mu_max) if mu_max > 0.0 else math.inf,
    )


def _svd_rank(m: np.ndarray) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = s[0] * max(m.shape) * np.finfo(np.float64).eps * RANK_TOL_FACTOR
    return int(np.count_nonzero(s > tol))


def _cluster_eigenvalues(eigs: np.ndarray) -> list[complex]:
    """Collapse numerically coincident eigenvalues to one representative."""
    tol = 1e-9 * max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    out: list[complex] = []
    for z in sorted(eigs, key=lambda w: (w.real, w.imag)):
        if not out or abs(z - out[-1]) > tol:
            out.append(complex(z))
    return out


def pbh_unreachable_modes(a: np.ndarray, b: np.ndarray) -> list[tuple[complex, int]]:
    """(eigenvalue, rank defect) pairs failing the PBH test on (A, B).

    For each distinct eigenvalue z of A the matrix [zI - A, B] must have
    full row rank n; rank is judged by SVD with the same thresholding
    policy as the kernel diagnostics.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise ValueError("A must be square and B must have matching row count")
    modes = []
    for z in _cluster_eigenvalues(np.linalg.eigvals(a)):
        m = np.hstack([z * np.eye(n) - a, b.astype(complex)])
        rank = _svd_rank(m)
        if rank < n:
            modes.append((z, n - rank))
    return modes


def reachability_check(kernel: Kernel, alpha: float) -> AnalysisReport:
    """PBH test on the pair (I - a*Theta, a*Theta).

    ``stabilizable`` requires every rank-deficient eigenvalue to lie
    strictly inside the unit circle (|z| < 1 - 1e-9); a deficiency at
    z = 1, the signature of a singular kernel, therefore fails it.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    n = kernel.size
    a0 = np.eye(n) - alpha * kernel.theta_matrix
    b0 = alpha * kernel.theta_matrix
    modes = pbh_unreachable_modes(a0, b0)
    modes = [(float(np.real(z)), k) for z, k in modes]
    return AnalysisReport(
        alpha=alpha,
        reachable=not modes,
        stabilizable=all(abs(z) < 1.0 - STRICT_EIG_TOL for z, _ in modes),
        unreachable_modes=modes,
    )


def analyze(
    kernel: Kernel,
    alpha: float,
    loss: LossModel | str = "sse",
    y_hat: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> AnalysisReport:
    """Stability and reachability in one report."""
    return stability_check(kernel, alpha, loss, y_hat, y).merge(reachability_check(kernel, alpha))


def equilibrium_classify(
    kernel: Kernel,
    alpha: float,
    loss: LossModel | str,
    y_hat: np.ndarray,
    y: np.ndarray,
) -> set[str]:
    """Which stationarity conditions hold at (y_hat, y).

    The update a*J^T*dL/dy vanishes when the loss gradient is zero, the
    step size is zero, the kernel is the zero matrix, or the gradient lies
    in the kernel's nullspace while neither is trivially zero.  Norms are
    compared against 1e-10.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    loss = LossModel(loss) if isinstance(loss, str) else loss
    g = loss.gradient(y_hat, y)
    g_norm = float(np.linalg.norm(g))
    k_norm = float(np.linalg.norm(kernel.theta_matrix))
    conditions = set()
    if g_norm <= EQUILIBRIUM_TOL:
        conditions.add("loss_minimum")
    if alpha == 0.0:
        conditions.add("frozen")
    if k_norm <= EQUILIBRIUM_TOL:
        conditions.add("null_kernel")
    if (
        float(np.linalg.norm(kernel.theta_matrix @ g)) <= EQUILIBRIUM_TOL
        and g_norm > EQUILIBRIUM_TOL
        and k_norm > EQUILIBRIUM_TOL
    ):
        conditions.add("gradient_in_nullspace")
    return conditions


def curvature_estimate(
    state: NetworkState,
    batch: Batch,
    displacement: np.ndarray,
    n_directions: int = 16,
    fd_step: float = 1e-3,
    seed: int = 0,
) -> float:
    """Largest output curvature probed along the displacement segment.

    Second central differences of the forward map are taken at four points
    on [theta, theta + displacement], over the displacement direction plus
    random unit directions.  A sampled maximum, hence a heuristic
    under-estimate of the true worst-case curvature.
    """
    if n_directions < 1:
        raise ValueError("n_directions must be >= 1")
    spec = state.spec
    disp = np.asarray(displacement, dtype=np.float64)
    if disp.shape != state.theta.shape:
        raise ValueError("displacement must match theta in shape")
    rng = np.random.default_rng(seed)
    directions = []
    d_norm = float(np.linalg.norm(disp))
    if d_norm > 0.0:
        directions.append(disp / d_norm)
    while len(directions) < n_directions:
        v = rng.standard_normal(disp.shape[0])
        directions.append(v / np.linalg.norm(v))
    h = fd_step
    best = 0.0
    x = batch.inputs
    for t in (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0):
        base = state.theta + t * disp
        y0 = _forward_theta(spec, base, x).ravel()
        for v in directions:
            yp = _forward_theta(spec, base + h * v, x).ravel()
            ym = _forward_theta(spec, base - h * v, x).ravel()
            curv = float(np.linalg.norm(yp - 2.0 * y0 + ym)) / h**2
            best = max(best, curv)
    return best


def lagrange_bound(
    state: NetworkState,
    batch: Batch,
    theta_displacement: np.ndarray,
    n_directions: int = 16,
    fd_step: float = 1e-3,
    seed: int = 0,
) -> float:
    """Second-order remainder bound (1/2) * H_hat * ||displacement||^2.

    Bounds the gap between the true outputs at theta + displacement and
    their first-order prediction from theta.  H_hat comes from
    :func:`curvature_estimate`; a zero displacement gives exactly 0.
    """
    d_norm = float(np.linalg.norm(np.asarray(theta_displacement, dtype=np.float64)))
    if d_norm == 0.0:
        return 0.0
    h_hat = curvature_estimate(state, batch, theta_displacement, n_directions, fd_step, seed)
    return 0.5 * h_hat * d_norm**2


def validity_monitor(
    y_hat_trace: np.ndarray,
    y_local_trace: np.ndarray,
    gamma: float,
    kappa: float,
    bound_series: np.ndarray,
    y_e: np.ndarray,
) -> int | None:
    """First step where the local trajectory escapes its decay envelope.

    Checks ||y_local(k) - y_e|| > gamma * kappa^k * ||y_local(0) - y_e||
    - bound_series[k].  The bound series is the per-step linearization
    error budget; once it eats the envelope, the frozen-kernel model is
    poor and should be recalculated.  Returns None when no step violates.
    """
    y_hat_trace = np.atleast_2d(np.asarray(y_hat_trace, dtype=np.float64))
    y_local_trace = np.atleast_2d(np.asarray(y_local_trace, dtype=np.float64))
    bound_series = np.asarray(bound_series, dtype=np.float64)
    if y_hat_trace.shape != y_local_trace.shape:
        raise ValueError("global and local traces must have equal shapes")
    if bound_series.shape[0] != y_local_trace.shape[0]:
        raise ValueError("bound series length must match the traces")
    if gamma <= 0.0 or kappa < 0.0:
        raise ValueError("gamma must be positive and kappa non-negative")
    err = np.linalg.norm(y_local_trace - np.asarray(y_e, dtype=np.float64), axis=1)
    e0 = err[0]
    for k in range(err.shape[0]):
        if err[k] > gamma * kappa**k * e0 - bound_series[k]:
            return k
    return None


@dataclass(frozen=True)
class LossBoundednessVerdict:
    """Per-loss boundedness result; only the fields for ``kind`` are set."""

    kind: str
    verdict: str
    spectral_radius: float = math.nan
    stable: bool | None = None
    strictly_stable: bool | None = None
    convergence_radius: float = math.nan
    lyapunov_lhs: float = math.nan
    note: str | None = None


def loss_boundedness(
    loss: LossModel | str,
    kernel: Kernel,
    alpha: float,
    y_hat: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> LossBoundednessVerdict:
    """Boundedness argument appropriate to the loss kind.

    mse/sse reuse the eigenvalue check.  mae contracts only into a ball of
    radius alpha * ||Theta||_2 / n around the minimum, with no exponential
    stability.  cross_entropy evaluates the pointwise Lyapunov decrease
    condition  a^2 (y/y_hat)^T Theta^T Theta (y/y_hat) - 2 a y_hat^T Theta (y/y_hat) < 0.
    """
    loss = LossModel(loss) if isinstance(loss, str) else loss
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    n = kernel.size
    if loss.kind in ("mse", "sse"):
        rep = stability_check(kernel, alpha, loss)
        return LossBoundednessVerdict(
            kind=loss.kind,
            verdict="stable" if rep.stable else "unstable",
            spectral_radius=rep.spectral_radius_open_loop,
            stable=rep.stable,
            strictly_stable=rep.strictly_stable,
        )
    if loss.kind == "mae":
        w, _ = kernel.eigh()
        radius = alpha * float(np.max(np.abs(w))) / n
        return LossBoundednessVerdict(
            kind="mae",
            verdict="no_exponential_stability",
            convergence_radius=radius,
            note="sign gradients converge to a ball around the minimum, not exponentially",
        )
    if y_hat is None or y is None:
        raise ValueError("cross_entropy boundedness needs y_hat and y")
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y_hat <= 0.0):
        raise ValueError("cross_entropy requires strictly positive predictions")
    yv = y / y_hat
    tv = kernel.theta_matrix @ yv
    term1 = alpha**2 * float(tv @ tv)
    term2 = 2.0 * alpha * float(y_hat @ tv)
    lhs = term1 - term2
    tol = 1e-14 * (1.0 + abs(term1) + abs(term2))
    if abs(lhs) <= tol:
        verdict = "boundary"
    else:
        verdict = "holds" if lhs < 0.0 else "violated"
    return LossBoundednessVerdict(kind="cross_entropy", verdict=verdict, lyapunov_lhs=lhs)
