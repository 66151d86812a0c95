"""Symmetric positive definite sparse solves."""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def check_symmetric(matrix, tol: float = 1e-12) -> float:
    """Relative asymmetry ``|A - A^T| / |A|`` in the max norm."""
    a = sp.csr_matrix(matrix)
    scale = abs(a).max() if a.nnz else 1.0
    diff = (a - a.T).tocoo()
    asym = abs(diff.data).max() / scale if diff.nnz else 0.0
    return float(asym)


def solve_spd(matrix, rhs, rel_tol: float = 1e-10, max_iters: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients; one solve per rhs column.

    When CG stalls above ``rel_tol`` (round-off floor of badly scaled bases)
    a sparse LU factorisation is tried once. ``ConvergenceError`` carries the
    best relative residual when neither reaches the tolerance.
    """
    a = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    single = b.ndim == 1
    b2 = b[:, None] if single else b
    n = a.shape[0]
    if max_iters is None:
        max_iters = max(10 * n, 1000)
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise ConvergenceError("matrix has non-positive diagonal; not SPD", np.inf)
    inv_diag = 1.0 / diag
    prec = LinearOperator((n, n), matvec=lambda x: inv_diag * x.ravel())
    out = np.zeros_like(b2)
    lu = None
    for j in range(b2.shape[1]):
        bj = b2[:, j]
        bnorm = np.linalg.norm(bj)
        if bnorm == 0.0:
            continue
        x, info = cg(a, bj, rtol=rel_tol, atol=0.0, maxiter=max_iters, M=prec)
        res = np.linalg.norm(bj - a @ x) / bnorm
        if not res <= rel_tol * 1.0001:
            # CG's recursive residual can drift from the true one; polish once.
            dx, _ = cg(a, bj - a @ x, rtol=rel_tol, atol=0.0, maxiter=max_iters, M=prec)
            x = x + dx
            res = np.linalg.norm(bj - a @ x) / bnorm
        if not res <= rel_tol * 1.0001:
            log.debug("CG stalled at relative residual %.3e; trying a direct solve", res)
            if lu is None:
                try:
                    lu = splu(a.tocsc())
                except RuntimeError as exc:  # exactly singular
                    raise ConvergenceError(f"CG stalled at {res:.3e} and LU failed: {exc}", res) from exc
            xd = lu.solve(bj)
            res_d = np.linalg.norm(bj - a @ xd) / bnorm
            if np.isfinite(res_d) and res_d < res:
                x, res = xd, res_d
        if not res <= rel_tol * 1.0001:
            raise ConvergenceError(f"CG did not converge: relative residual {res:.3e}", res)
        out[:, j] = x
    return out[:, 0] if single else out
