"""Label-feedback synthesis for frozen-kernel training dynamics.

The augmented state ty = [y_hat; 1] turns the affine output update into a
linear one.  Minimizing the quadratic tracking cost with control penalty
R = p*I over the constant-one coordinate gives a discrete algebraic
Riccati equation whose gain K feeds back into the labels:
y_bar = y_true - K ty.

The augmented pair has a structural eigenvalue 1 on span{[y; 1]} that no
input can move.  It is cost-free (Q_tilde annihilates that direction), so
the Riccati fixed-point iteration is stationary on it by construction;
Schur-type solvers, which require stabilizability in the classical sense,
are not applicable here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import Kernel
from .losses import LossModel


class DareConvergenceError(RuntimeError):
    """Fixed-point Riccati iteration did not meet its tolerance."""

    def __init__(self, message: str, last_change: float | None = None):
        super().__init__(message)
        self.last_change = last_change


class ConditioningError(RuntimeError):
    """A linear solve inside the Riccati iteration was singular or blew up."""


@dataclass
class AugmentedSystem:
    """Matrices of the augmented output dynamics and its quadratic cost.

    A = [[I - M, M y], [0, 1]], B = [[M], [0]] with M = alpha * Theta * H,
    Q_tilde = [[Q, -Qy], [-y^T Q, y^T Q y]], R = p * I.  H folds in the
    curvature of the trained loss (1/n for mse, 1 for sse).
    """

    A: np.ndarray
    B: np.ndarray
    Q_tilde: np.ndarray
    R: np.ndarray
    alpha: float
    y: np.ndarray
    loss_kind: str = "sse"

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def target_direction(self) -> np.ndarray:
        """The structurally invariant direction [y; 1]."""
        return np.append(self.y, 1.0)


def build_augmented_system(
    kernel: Kernel,
    alpha: float,
    y: np.ndarray,
    q_weight: float | np.ndarray = 1.0,
    r_weight: float = 0.1,
    loss: LossModel | str = "sse",
) -> AugmentedSystem:
    """Assemble the augmented dynamics for a frozen kernel and target y.

    ``q_weight`` is a scalar (Q = q*I) or a symmetric PSD matrix;
    ``r_weight`` is the scalar control penalty p > 0.  Only quadratic
    losses give constant curvature, so mse and sse are accepted.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    loss = LossModel(loss) if isinstance(loss, str) else loss
    if loss.kind not in ("mse", "sse"):
        raise ValueError(f"label feedback synthesis requires a quadratic loss, got {loss.kind!r}")
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = kernel.size
    if y.shape != (n,):
        raise ValueError(f"y must have length {n}, got shape {y.shape}")
    p = float(r_weight)
    if p <= 0.0:
        raise ValueError("r_weight must be positive")
    if np.isscalar(q_weight) or np.ndim(q_weight) == 0:
        q = float(q_weight)
        if q < 0.0:
            raise ValueError("q_weight must be non-negative")
        q_mat = q * np.eye(n)
    else:
        q_mat = np.ascontiguousarray(q_weight, dtype=np.float64)
        if q_mat.shape != (n, n):
            raise ValueError(f"q_weight matrix must be ({n}, {n})")
        if np.linalg.norm(q_mat - q_mat.T) > 1e-10 * max(np.linalg.norm(q_mat), 1e-300):
            raise ValueError("q_weight matrix must be symmetric")
        w = np.linalg.eigvalsh(q_mat)
        if w[0] < -1e-8 * max(w[-1], 0.0):
            raise ValueError("q_weight matrix must be positive semidefinite")

    h = loss.hessian_scale(n)
    m = alpha * h * kernel.theta_matrix
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = np.eye(n) - m
    a[:n, n] = m @ y
    a[n, n] = 1.0
    b = np.vstack([m, np.zeros((1, n))])
    qy = q_mat @ y
    q_tilde = np.zeros((n + 1, n + 1))
    q_tilde[:n, :n] = q_mat
    q_tilde[:n, n] = -qy
    q_tilde[n, :n] = -qy
    q_tilde[n, n] = float(y @ qy)
    return AugmentedSystem(a, b, q_tilde, p * np.eye(n), alpha, y, loss.kind)


def dare_residual(a, b, q, r, p) -> float:
    """Relative defect ||P - (A^T P A + Q - A^T P B (R+B^T P B)^-1 B^T P A)||_F / (1+||P||_F)."""
    pa = p @ a
    pb = p @ b
    k = np.linalg.solve(r + b.T @ pb, b.T @ pa)
    rhs = a.T @ pa + q - (b.T @ pa).T @ k
    return float(np.linalg.norm(p - rhs) / (1.0 + np.linalg.norm(p)))


def dare_iteration(a, b, q, r, tol: float = 1e-10, max_iters: int = 100000):
    """Value-iterate P <- A^T P A + Q - A^T P B (R+B^T P B)^-1 B^T P A from P0 = Q.

    Stops when the Frobenius change drops below tol * (1 + ||P||_F).
    Returns (P, K, iterations, residual) with K = (R+B^T P B)^-1 B^T P A.
    Raises DareConvergenceError when max_iters is exhausted and
    ConditioningError when the inner solve fails or iterates blow up.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    p = q.copy()
    last_rel = math.inf
    for it in range(1, max_iters + 1):
        pa = p @ a
        pb = p @ b
        g = r + b.T @ pb
        bpa = b.T @ pa
        try:
            k = np.linalg.solve(g, bpa)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"R + B^T P B numerically singular at iteration {it}") from exc
        p_next = a.T @ pa + q - bpa.T @ k
        p_next = (p_next + p_next.T) / 2.0
        if not np.all(np.isfinite(p_next)):
            raise ConditioningError(f"Riccati iterate became non-finite at iteration {it}")
        delta = float(np.linalg.norm(p_next - p))
        p = p_next
        last_rel = delta / (1.0 + float(np.linalg.norm(p)))
        if last_rel <= tol:
            break
    else:
        raise DareConvergenceError(
            f"Riccati iteration did not converge in {max_iters} iterations "
            f"(last relative change {last_rel:.3e})",
            last_change=last_rel,
        )
    pa = p @ a
    g = r + b.T @ (p @ b)
    k = np.linalg.solve(g, b.T @ pa)
    return p, k, it, dare_residual(a, b, q, r, p)


@dataclass
class FeedbackLaw:
    """Riccati solution P, gain K and closed-loop diagnostics."""

    P: np.ndarray
    K: np.ndarray
    dare_residual: float
    closed_loop_radius_deflated: float
    iterations: int

    def cost_report(self, y0: np.ndarray, y: np.ndarray | None = None) -> dict:
        """Optimal cost-to-go from initial outputs y0, both conventions.

        ``quadratic_form`` = ty0^T P ty0 equals the plain infinite-horizon
        sum of stage costs ty^T Q_tilde ty + u^T R u; ``half_quadratic_form``
        halves it, matching a 1/2-weighted objective.
        """
        ty0 = np.append(np.asarray(y0, dtype=np.float64), 1.0)
        val = float(ty0 @ self.P @ ty0)
        return {
            "quadratic_form": val,
            "half_quadratic_form": 0.5 * val,
            "convention": "quadratic_form sums undiscounted stage costs ty^T Q ty + u^T R u",
        }


def deflated_spectral_radius(m: np.ndarray, direction: np.ndarray) -> float:
    """Spectral radius of m restricted to the complement of one eigendirection.

    Change to an orthonormal basis whose first vector is the direction; the
    trailing block then carries every eigenvalue except the structural one.
    """
    direction = np.asarray(direction, dtype=np.float64)
    t = direction / np.linalg.norm(direction)
    basis, _ = np.linalg.qr(np.column_stack([t, np.eye(t.shape[0])]))
    u = basis[:, 1:]
    block = u.T @ m @ u
    if block.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(block))))


def solve_dare(system: AugmentedSystem, max_iters: int = 100000, tol: float = 1e-10) -> FeedbackLaw:
    """Solve the augmented Riccati equation by fixed-point value iteration.

    Starting from P0 = Q_tilde keeps the iteration exactly stationary on
    the cost-free direction [y; 1], so P[y;1] and K[y;1] stay at rounding
    level throughout.
    """
    p, k, iters, residual = dare_iteration(
        system.A, system.B, system.Q_tilde, system.R, tol=tol, max_iters=max_iters
    )
    radius = deflated_spectral_radius(system.A - system.B @ k, system.target_direction)
    return FeedbackLaw(
        P=p, K=k, dare_residual=residual, closed_loop_radius_deflated=radius, iterations=iters
    )


@dataclass
class ClosedLoopInfo:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    structural_eigenvalue: complex
    deflated_radius: float


def closed_loop(system: AugmentedSystem, law: FeedbackLaw) -> ClosedLoopInfo:
    """A - B K with its spectrum, separating the structural [y; 1] mode."""
    m = system.A - system.B @ law.K
    eigvals, eigvecs = np.linalg.eig(m)
    t = system.target_direction
    t = t / np.linalg.norm(t)
    alignment = np.abs(t @ eigvecs) / np.linalg.norm(eigvecs, axis=0)
    idx = int(np.argmax(alignment))
    return ClosedLoopInfo(
        matrix=m,
        eigenvalues=eigvals,
        structural_eigenvalue=complex(eigvals[idx]),
        deflated_radius=deflated_spectral_radius(m, system.target_direction),
    )


def simulate_local(
    system: AugmentedSystem,
    law: FeedbackLaw | None,
    y0: np.ndarray,
    steps: int,
) -> np.ndarray:
    """Iterate the frozen-kernel output dynamics from y_hat(0) = y0.

    law None gives the open loop (plain descent step); a FeedbackLaw gives
    the label-feedback closed loop.  Returns (steps + 1, n) with row k the
    outputs after k steps; the hidden constant coordinate stays exactly 1
    because the bottom rows of A and B are [0, ..., 0, 1] and zero.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    n = system.n
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.shape != (n,):
        raise ValueError(f"y0 must have length {n}")
    m = system.A if law is None else system.A - system.B @ law.K
    out = np.empty((steps + 1, n))
    out[0] = y0
    state = np.append(y0, 1.0)
    for k in range(1, steps + 1):
        state = m @ state
        out[k] = state[:n]
    return out
