"""
Smooth loss models f for the penalized problem min f(x) + lambda * ||x||_q^q.

Three models share one interface: least squares (compressed sensing),
L2-regularized logistic regression and the squared-hinge SVM. Each exposes
the value, gradient and a support-restricted generalized Hessian, plus the
penalized quantities the Newton step works with.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator
from scipy.special import expit

from src.lq_prox import lq_penalty
from src.utils.linear_ops import (
    Matrix,
    add_diagonal,
    matvec,
    restricted_gram,
    restricted_gram_operator,
    rmatvec,
)

logger = logging.getLogger(__name__)

DEFAULT_DENSE_THRESHOLD = 500


class ProblemKind(Enum):
    LEAST_SQUARES = "least_squares"
    LOGISTIC_L2 = "logistic"
    SQUARED_HINGE_SVM = "svm"


@dataclass
class RestrictedHessian:
    """
    One element of the generalized Hessian restricted to a support.

    matrix is the dense block when it was formed explicitly, otherwise None
    and only operator is available.
    """
    support: np.ndarray
    operator: LinearOperator
    matrix: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(self.support.size)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ v
        return matvec(self.operator, v)

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.asarray(self.operator @ np.eye(self.dim))

    def shifted(self, diag: np.ndarray) -> "RestrictedHessian":
        """Copy with diag(diag) added."""
        if self.matrix is not None:
            matrix = add_diagonal(self.matrix, diag)
            return RestrictedHessian(self.support, aslinearoperator(matrix), matrix)
        return RestrictedHessian(self.support, add_diagonal(self.operator, diag), None)


class Problem:
    """
    A smooth objective over a data matrix (rows are samples) and a response vector.

    Instances are not modified after construction.
    """

    def __init__(
        self,
        kind: ProblemKind,
        data_matrix: Union[np.ndarray, Matrix],
        response: np.ndarray,
        ridge: float = 0.0,
        dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    ):
        """
        Args:
            kind: Which loss to use
            data_matrix: m x n matrix A (dense or sparse)
            response: b for least squares, labels in {0, 1} for logistic,
                labels in {-1, 1} for the SVM
            ridge: mu, required > 0 for logistic and SVM, 0 for least squares
            dense_threshold: Largest support for which Hessian blocks are formed explicitly
        """
        self.kind = ProblemKind(kind)
        if sp.issparse(data_matrix):
            self.data_matrix = sp.csr_matrix(data_matrix, dtype=float)
        else:
            self.data_matrix = np.asarray(data_matrix, dtype=float)
            if self.data_matrix.ndim != 2:
                raise ValueError(f"Data matrix must be 2-D, got shape {self.data_matrix.shape}")
        self.response = np.asarray(response, dtype=float).ravel()
        self.ridge = float(ridge)
        self.dense_threshold = int(dense_threshold)

        m, n = self.data_matrix.shape
        if self.response.shape[0] != m:
            raise ValueError(f"Response has {self.response.shape[0]} entries but the data matrix has {m} rows")
        if m == 0 or n == 0:
            raise ValueError("Data matrix must have at least one row and one column")

        if self.kind is ProblemKind.LEAST_SQUARES:
            if self.ridge != 0:
                raise ValueError("Least squares takes no ridge term")
        else:
            if not self.ridge > 0:
                raise ValueError(f"{self.kind.value} requires a positive ridge mu, got {self.ridge}")
            allowed = {0.0, 1.0} if self.kind is ProblemKind.LOGISTIC_L2 else {-1.0, 1.0}
            if not set(np.unique(self.response)).issubset(allowed):
                raise ValueError(f"Labels for {self.kind.value} must lie in {sorted(allowed)}")

    @property
    def m(self) -> int:
        return self.data_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.data_matrix.shape[1]

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n:
            raise ValueError(f"Expected a vector of length {self.n}, got {x.shape[0]}")
        return x

    def _check_support(self, support: Sequence[int]) -> np.ndarray:
        support = np.unique(np.asarray(support, dtype=int))
        if support.size == 0:
            raise ValueError("Support must be nonempty")
        if support[0] < 0 or support[-1] >= self.n:
            raise ValueError(f"Support indices must lie in [0, {self.n})")
        return support

    def value(self, x: np.ndarray) -> float:
        """f(x)."""
        x = self._check_x(x)
        t = matvec(self.data_matrix, x)
        if self.kind is ProblemKind.LEAST_SQUARES:
            r = t - self.response
            return 0.5 * float(r @ r)
        ridge_term = 0.5 * self.ridge * float(x @ x)
        if self.kind is ProblemKind.LOGISTIC_L2:
            # logaddexp(0, t) = log(1 + e^-|t|) + max(t, 0)
            return float(np.mean(np.logaddexp(0.0, t) - self.response * t)) + ridge_term
        hinge = np.maximum(1.0 - self.response * t, 0.0)
        return 0.5 * float(hinge @ hinge) / self.m + ridge_term

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of f at x."""
        x = self._check_x(x)
        t = matvec(self.data_matrix, x)
        if self.kind is ProblemKind.LEAST_SQUARES:
            return rmatvec(self.data_matrix, t - self.response)
        if self.kind is ProblemKind.LOGISTIC_L2:
            return rmatvec(self.data_matrix, expit(t) - self.response) / self.m + self.ridge * x
        hinge = np.maximum(1.0 - self.response * t, 0.0)
        return -rmatvec(self.data_matrix, hinge * self.response) / self.m + self.ridge * x

    def _curvature(self, x: np.ndarray):
        """Per-sample weights D and identity shift of the generalized Hessian A^T D A + shift*I."""
        if self.kind is ProblemKind.LEAST_SQUARES:
            return None, 0.0
        t = matvec(self.data_matrix, x)
        if self.kind is ProblemKind.LOGISTIC_L2:
            s = expit(t)
            return s * (1.0 - s) / self.m, self.ridge
        # strict inequality: samples sitting exactly on the kink are left out
        active = (1.0 - self.response * t) > 0
        return active.astype(float) / self.m, self.ridge

    def restricted_hessian(self, x: np.ndarray, support: Sequence[int]) -> RestrictedHessian:
        """
        Generalized Hessian of f at x restricted to rows and columns in support.

        Args:
            x: Point of evaluation
            support: Nonempty index set S

        Returns:
            RestrictedHessian; the dense block is formed when |S| <= dense_threshold
        """
        x = self._check_x(x)
        support = self._check_support(support)
        weights, shift = self._curvature(x)
        if support.size <= self.dense_threshold:
            matrix = restricted_gram(self.data_matrix, support, weights, shift)
            return RestrictedHessian(support, aslinearoperator(matrix), matrix)
        operator = restricted_gram_operator(self.data_matrix, support, weights, shift)
        return RestrictedHessian(support, operator, None)

    def penalized_value(self, x: np.ndarray, lam: float, q: float) -> float:
        """F(x) = f(x) + lam * ||x||_q^q."""
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        return self.value(x) + lam * lq_penalty(x, q)

    def restricted_penalized_gradient(
        self,
        w: np.ndarray,
        support: Sequence[int],
        lam: float,
        q: float,
        grad: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Gradient on S of E(w; S) = f(w) + lam * ||w_S||_q^q.

        Args:
            w: Point with w_i != 0 for every i in S
            support: Index set S
            lam: Penalty weight
            q: Exponent in [0, 1)
            grad: Precomputed gradient of f at w, if available

        Returns:
            Vector of length |S|
        """
        w = self._check_x(w)
        support = self._check_support(support)
        w_s = w[support]
        if np.any(w_s == 0):
            raise ValueError("Penalized gradient needs w_i != 0 on the whole support")
        g = (self.gradient(w) if grad is None else np.asarray(grad, dtype=float))[support]
        if q == 0:
            return g
        return g + lam * q * np.sign(w_s) * np.abs(w_s) ** (q - 1.0)

    def newton_matrix(self, w: np.ndarray, support: Sequence[int], lam: float, q: float) -> RestrictedHessian:
        """
        M = H_S + lam * diag(q (q - 1) |w_i|^(q - 2)), the Hessian of E(.; S) on S.

        The diagonal term is <= 0, so M may be indefinite for q in (0, 1).
        """
        w = self._check_x(w)
        support = self._check_support(support)
        w_s = w[support]
        if np.any(w_s == 0):
            raise ValueError("Newton matrix needs w_i != 0 on the whole support")
        hessian = self.restricted_hessian(w, support)
        if q == 0:
            return hessian
        return hessian.shifted(lam * q * (q - 1.0) * np.abs(w_s) ** (q - 2.0))
