"""Sparse solves: direct factorisation first, Krylov fallback, residual-checked."""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, factorized, gmres, spsolve

from polyflow.core.errors import LinearSolveFailure

logger = logging.getLogger(__name__)

REL_TOL = 1e-10
KRYLOV_MAXITER = 2000


def relative_residual(A: sparse.spmatrix, x: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(b)), np.finfo(float).tiny)
    return float(np.linalg.norm(A @ x - b)) / scale


def _krylov(A: sparse.spmatrix, b: np.ndarray, symmetric: bool, tol: float) -> np.ndarray:
    if symmetric:
        x, info = cg(A, b, rtol=tol, maxiter=KRYLOV_MAXITER)
    else:
        x, info = gmres(A, b, rtol=tol, restart=200, maxiter=KRYLOV_MAXITER)
    if info != 0:
        logger.warning("krylov fallback stopped with info=%d", info)
    return x


def solve(
    A: sparse.spmatrix, b: np.ndarray, *, symmetric: bool = False, tol: float = REL_TOL, label: str = "system"
) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    A = sparse.csc_matrix(A)
    try:
        x = spsolve(A, b)
        if np.all(np.isfinite(x)) and relative_residual(A, x, b) <= tol:
            return x
        logger.warning("direct solve of %s missed tolerance; trying krylov fallback", label)
    except RuntimeError as e:
        logger.warning("direct solve of %s failed (%s); trying krylov fallback", label, e)
    x = _krylov(A, b, symmetric, tol)
    res = relative_residual(A, x, b)
    if not np.all(np.isfinite(x)) or res > tol:
        raise LinearSolveFailure(
            f"linear solve of {label} did not converge",
            details={"relative_residual": res, "tolerance": tol, "size": A.shape[0]},
        )
    return x


class FactorizedSolver:
    """A matrix factorised once and reused, with the same residual guarantee as ``solve``."""

    def __init__(self, A: sparse.spmatrix, *, symmetric: bool = False, tol: float = REL_TOL, label: str = "system"):
        self.A = sparse.csc_matrix(A)
        self.symmetric = symmetric
        self.tol = tol
        self.label = label
        self._solve = factorized(self.A)

    def __call__(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if not np.any(b):
            return np.zeros_like(b)
        x = self._solve(b)
        if np.all(np.isfinite(x)) and relative_residual(self.A, x, b) <= self.tol:
            return x
        logger.warning("factorised solve of %s missed tolerance; trying krylov fallback", self.label)
        return solve(self.A, b, symmetric=self.symmetric, tol=self.tol, label=self.label)
