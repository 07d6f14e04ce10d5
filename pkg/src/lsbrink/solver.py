"""Symmetric positive definite linear algebra.

Sparse matrices are scipy CSR; the global rank-1 trace penalty is kept as
a vector g so matrix-vector products cost one extra dot product instead
of densifying the matrix. The iterative solver is Jacobi-preconditioned
conjugate gradients; a dense Cholesky path exists for oracle tests and
tiny systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    residual_history: list = field(default_factory=list)


def matvec_rank1(matrix, rank1, x):
    """(A + g g^T) x without forming the rank-1 update."""
    x = np.asarray(x, dtype=float)
    if matrix.shape[1] != x.shape[0] or rank1.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch in rank-1 matvec")
    return matrix @ x + rank1 * (rank1 @ x)


def pcg(matrix, rank1, rhs, tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned CG for (A + g g^T) x = b.

    Convergence is declared when ||b - (A + g g^T) x|| / ||b|| <= tol.
    Non-convergence within ``max_iter`` is reported, not raised; a
    non-positive preconditioner diagonal is fatal (system not SPD).
    """
    n = rhs.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    diag = np.asarray(matrix.diagonal()) + rank1 * rank1
    if n and diag.min() <= 0.0:
        raise ValueError("non-positive diagonal entry: system is not SPD")

    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, [0.0])

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - matvec_rank1(matrix, rank1, x)
    z = r / diag
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / b_norm]
    iterations = 0
    for k in range(1, max_iter + 1):
        ap = matvec_rank1(matrix, rank1, p)
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        iterations = k
        rel = np.linalg.norm(r) / b_norm
        history.append(rel)
        if rel <= tol:
            break
        z = r / diag
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
    rel = history[-1]
    return x, SolveReport(iterations, float(rel), rel <= tol, history)


def dense_solve(matrix, rhs):
    """Cholesky solve of a dense SPD system (test oracle, tiny systems)."""
    matrix = np.asarray(matrix, dtype=float)
    factor = scipy.linalg.cho_factor(matrix, lower=True)
    return scipy.linalg.cho_solve(factor, np.asarray(rhs, dtype=float))


def solve_system(system, tol=1e-10, max_iter=None):
    """PCG on an assembled SparseSystem; convenience wrapper."""
    return pcg(system.matrix, system.rank1, system.rhs, tol=tol, max_iter=max_iter)


def as_dense(system):
    """Dense A + g g^T of an assembled system (tests, tiny systems)."""
    a = system.matrix.toarray()
    return a + np.outer(system.rank1, system.rank1)


def is_csr_symmetric(matrix, tol=1e-12):
    """Structural and numerical symmetry check for assembled matrices."""
    diff = (matrix - matrix.T).tocoo()
    if diff.nnz == 0:
        return True
    scale = max(1.0, np.abs(matrix.data).max())
    return np.abs(diff.data).max() <= tol * scale


CsrMatrix = sp.csr_matrix
