"""Sparse linear solves: direct LU (default) and preconditioned GMRES."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["LinearSolveError", "solve_direct", "solve_iterative"]


class LinearSolveError(Exception):
    pass


def _as_csc(system):
    mat = system.matrix if hasattr(system, "matrix") else system
    rhs = system.rhs if hasattr(system, "rhs") else None
    return sp.csc_matrix(mat), rhs


def solve_direct(system, rhs=None, rtol=1e-10):
    """Sparse LU solve (SuperLU with partial pivoting and a fill-reducing
    column ordering), sharpened by iterative refinement until the
    relative residual is at most `rtol`."""
    mat, b = _as_csc(system)
    if rhs is not None:
        b = np.asarray(rhs, dtype=float)
    if b is None:
        raise LinearSolveError("no right-hand side given")
    if mat.shape[0] != mat.shape[1]:
        raise LinearSolveError("matrix is not square")
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization failed (singular matrix?): {exc}") from None
    if not np.isfinite(lu.U.diagonal()).all() or (lu.U.diagonal() == 0).any():
        raise LinearSolveError("numerically singular matrix: zero pivot in U")
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    for _ in range(3):
        r = b - mat @ x
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            return x
        x = x + lu.solve(r)
    r = b - mat @ x
    res = np.linalg.norm(r) / bnorm
    if res > rtol:
        raise LinearSolveError(
            f"direct solve stalled at relative residual {res:.3e} (target {rtol:.1e})")
    return x


def solve_iterative(system, tol=1e-10, max_iter=500, restart=100):
    """Restarted GMRES with an incomplete-LU preconditioner."""
    mat, b = _as_csc(system)
    if b is None:
        raise LinearSolveError("system carries no right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(mat.shape[0])
    if max_iter < 1:
        raise LinearSolveError("non-convergence: max_iter exhausted before any iteration")
    try:
        ilu = spla.spilu(mat, drop_tol=1e-6, fill_factor=20)
    except RuntimeError as exc:
        raise LinearSolveError(f"ILU preconditioner failed: {exc}") from None
    M = spla.LinearOperator(mat.shape, ilu.solve)
    x, info = spla.gmres(mat, b, rtol=tol, atol=0.0, restart=restart,
                         maxiter=max_iter, M=M)
    res = np.linalg.norm(b - mat @ x) / bnorm
    if info != 0 or res > tol:
        raise LinearSolveError(
            f"GMRES did not converge: info={info}, relative residual {res:.3e}")
    return x
