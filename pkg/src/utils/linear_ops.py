"""
Linear algebra kernels shared by the objective models and the Newton step.

Matrices may be dense numpy arrays or scipy sparse matrices; both are used
through the same helpers. Symmetric solves report failure as a value instead
of raising, since the solver has a fallback for every failure.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]

# Pivots below PIVOT_RTOL * ||M|| mark the system as singular
PIVOT_RTOL = 1e-12
DIRECT_RESIDUAL_RTOL = 1e-10

FLAG_SINGULAR = "singular"
FLAG_RESIDUAL = "residual"
FLAG_NONPOSITIVE_CURVATURE = "nonpositive_curvature"
FLAG_MAX_ITER = "max_iter"


@dataclass
class SymmetricSystem:
    """A symmetric linear system M d = rhs."""
    operator: Union[Matrix, LinearOperator]
    rhs: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.rhs.shape[0])

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return matvec(self.operator, v)

    def matrix(self) -> np.ndarray:
        """Materialize the operator as a dense array."""
        if isinstance(self.operator, np.ndarray):
            return self.operator
        if sp.issparse(self.operator):
            return self.operator.toarray()
        return np.asarray(self.operator @ np.eye(self.dim))


@dataclass
class LinearSolveResult:
    """Outcome of a linear solve; x is None whenever converged is False."""
    x: Optional[np.ndarray]
    converged: bool
    flag: Optional[str] = None
    iterations: int = 0
    residual: float = float("nan")


def matvec(matrix: Union[Matrix, LinearOperator], v: np.ndarray) -> np.ndarray:
    """Matrix-vector product returning a flat float array for dense, sparse or operator input."""
    return np.asarray(matrix @ v, dtype=float).ravel()


def rmatvec(matrix: Matrix, v: np.ndarray) -> np.ndarray:
    """Transposed product A^T v."""
    return np.asarray(matrix.T @ v, dtype=float).ravel()


def column_block(matrix: Matrix, support: np.ndarray) -> Matrix:
    """Columns of matrix indexed by support (stays sparse for sparse input)."""
    if sp.issparse(matrix):
        return matrix.tocsc()[:, support]
    return matrix[:, support]


def restricted_gram(
    matrix: Matrix,
    support: np.ndarray,
    row_weights: Optional[np.ndarray] = None,
    shift: float = 0.0,
) -> np.ndarray:
    """
    Dense (A_S^T D A_S + shift * I) for D = diag(row_weights).

    Args:
        matrix: Data matrix A, rows are samples
        support: Column indices S
        row_weights: Diagonal of D (identity when None)
        shift: Multiple of the identity added to the block

    Returns:
        Dense |S| x |S| symmetric array
    """
    block = column_block(matrix, support)
    weighted = block if row_weights is None else _scale_rows(block, row_weights)
    gram = block.T @ weighted
    gram = gram.toarray() if sp.issparse(gram) else np.asarray(gram)
    # symmetrize away rounding differences between the two triangles
    gram = 0.5 * (gram + gram.T)
    if shift:
        gram[np.diag_indices_from(gram)] += shift
    return gram


def restricted_gram_operator(
    matrix: Matrix,
    support: np.ndarray,
    row_weights: Optional[np.ndarray] = None,
    shift: float = 0.0,
) -> LinearOperator:
    """Matvec-only version of restricted_gram for large supports."""
    block = column_block(matrix, support)
    dim = len(support)

    def _apply(v):
        v = np.asarray(v, dtype=float).ravel()
        u = matvec(block, v)
        if row_weights is not None:
            u = u * row_weights
        return rmatvec(block, u) + shift * v

    return LinearOperator((dim, dim), matvec=_apply, rmatvec=_apply, dtype=float)


def add_diagonal(operator: Union[np.ndarray, LinearOperator], diag: np.ndarray):
    """Return operator + diag(diag) without touching the input."""
    if isinstance(operator, np.ndarray):
        shifted = operator.copy()
        shifted[np.diag_indices_from(shifted)] += diag
        return shifted
    return operator + aslinearoperator(sp.diags(diag))


def solve_direct(system: SymmetricSystem) -> LinearSolveResult:
    """
    Solve a small symmetric system by LU factorisation with partial pivoting.

    LU rather than Cholesky because Newton matrices may be indefinite.

    Args:
        system: The system to solve

    Returns:
        LinearSolveResult; flag "singular" on a vanishing pivot, "residual" if
        the computed solution misses the residual bound
    """
    matrix = system.matrix()
    rhs = np.asarray(system.rhs, dtype=float)
    if system.dim == 0:
        return LinearSolveResult(x=np.zeros(0), converged=True, residual=0.0)

    scale = float(np.linalg.norm(matrix, ord=np.inf))
    if not np.isfinite(scale) or scale == 0:
        return LinearSolveResult(x=None, converged=False, flag=FLAG_SINGULAR)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * scale:
        logger.debug(f"Direct solve: pivot below {PIVOT_RTOL:.1e} * ||M||")
        return LinearSolveResult(x=None, converged=False, flag=FLAG_SINGULAR)

    x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    residual = float(np.linalg.norm(matrix @ x - rhs))
    if not residual <= DIRECT_RESIDUAL_RTOL * (1.0 + np.linalg.norm(rhs)):
        return LinearSolveResult(x=None, converged=False, flag=FLAG_RESIDUAL, residual=residual)
    return LinearSolveResult(x=x, converged=True, iterations=1, residual=residual)


def solve_cg(
    system: SymmetricSystem,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
) -> LinearSolveResult:
    """
    Conjugate gradient for M d = rhs, started at zero.

    Stops as soon as a search direction with <Mp, p> <= 0 appears, since the
    Newton matrix can be indefinite.

    Args:
        system: The system to solve
        tol: Relative residual tolerance ||r|| <= tol * ||rhs||
        maxit: Iteration cap (default 10 * dim)

    Returns:
        LinearSolveResult with the iteration count and final residual norm
    """
    n = system.dim
    maxit = 10 * n if maxit is None else maxit
    rhs = np.asarray(system.rhs, dtype=float)
    x = np.zeros(n)
    r = rhs.copy()
    rr = float(r @ r)
    rhs_norm = np.sqrt(rr)
    if rhs_norm == 0:
        return LinearSolveResult(x=x, converged=True, iterations=0, residual=0.0)

    p = r.copy()
    for it in range(1, maxit + 1):
        Ap = system.matvec(p)
        curvature = float(p @ Ap)
        if curvature <= 0:
            logger.debug(f"CG: nonpositive curvature {curvature:.3e} at iteration {it}")
            return LinearSolveResult(
                x=None, converged=False, flag=FLAG_NONPOSITIVE_CURVATURE,
                iterations=it, residual=np.sqrt(rr),
            )
        step = rr / curvature
        x += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * rhs_norm:
            return LinearSolveResult(x=x, converged=True, iterations=it, residual=np.sqrt(rr_new))
        p = r + (rr_new / rr) * p
        rr = rr_new

    return LinearSolveResult(x=None, converged=False, flag=FLAG_MAX_ITER, iterations=maxit, residual=np.sqrt(rr))


def _scale_rows(block: Matrix, weights: np.ndarray) -> Matrix:
    if sp.issparse(block):
        return sp.diags(weights) @ block
    return block * weights[:, None]
