"""Empirical tangent kernels built from per-sample output Jacobians.

The kernel is Theta = J J^T where J stacks per-sample output gradients
data-major, so block (i, j) is the output_dim x output_dim product of the
gradients of samples i and j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import Batch, NetworkState, check_batch, jacobian

# Relative symmetry defect tolerated in a kernel matrix before it is
# rejected outright.
_SYMMETRY_RTOL = 1e-10

# Headroom factor on the eigenvalue-based rank threshold; absorbs
# accumulation error in wide-network Jacobian products.
RANK_TOL_FACTOR = 1e3


class EigendecompositionError(RuntimeError):
    """Raised when the eigenvalue solver fails on a kernel matrix."""


@dataclass
class Kernel:
    """A tangent kernel matrix with the step it was built at.

    ``eigvals`` (ascending) is filled by :func:`kernel_diagnostics` the
    first time it runs and reused afterwards.
    """

    theta_matrix: np.ndarray
    built_at_step: int = 0
    eigvals: np.ndarray | None = None
    _eig: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        m = np.ascontiguousarray(self.theta_matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"kernel matrix must be square, got shape {m.shape}")
        defect = np.linalg.norm(m - m.T)
        scale = np.linalg.norm(m)
        if defect > _SYMMETRY_RTOL * max(scale, 1e-300):
            raise ValueError("kernel matrix is not symmetric")
        # Entrywise (a+b)/2 makes the stored matrix exactly symmetric.
        m = (m + m.T) / 2.0
        self.theta_matrix = m

    @property
    def size(self) -> int:
        return self.theta_matrix.shape[0]

    def eigh(self):
        """Cached symmetric eigendecomposition (ascending eigenvalues)."""
        if self._eig is None:
            try:
                w, v = np.linalg.eigh(self.theta_matrix)
            except np.linalg.LinAlgError as exc:
                raise EigendecompositionError(f"eigendecomposition failed: {exc}") from exc
            self._eig = (w, v)
            self.eigvals = w
        return self._eig


@dataclass(frozen=True)
class KernelDiagnostics:
    min_eig: float
    max_eig: float
    rank: int
    condition_estimate: float
    rank_tol: float


def build_kernel(state: NetworkState, batch: Batch, step: int = 0) -> Kernel:
    """Theta(k0) = J J^T for the current parameters on the given batch."""
    check_batch(state.spec, batch)
    j = jacobian(state, batch)
    return Kernel(j @ j.T, built_at_step=int(step))


def kernel_diagnostics(kernel: Kernel) -> KernelDiagnostics:
    """Eigenvalue range, numerical rank and a condition estimate.

    Rank counts eigenvalues above max_eig * n * eps * 1e3.  The condition
    estimate is max/min eigenvalue, infinite for rank-deficient kernels.
    """
    try:
        w = np.linalg.eigvalsh(kernel.theta_matrix)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(f"eigendecomposition failed: {exc}") from exc
    kernel.eigvals = w
    max_eig = float(w[-1])
    min_eig = float(w[0])
    tol = max(max_eig, 0.0) * kernel.size * np.finfo(np.float64).eps * RANK_TOL_FACTOR
    rank = int(np.count_nonzero(w > tol))
    cond = max_eig / min_eig if rank == kernel.size else math.inf
    return KernelDiagnostics(min_eig, max_eig, rank, cond, tol)


def save_matrix(path, matrix: np.ndarray) -> None:
    """Write a dense matrix as comma-separated rows with full precision."""
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")
