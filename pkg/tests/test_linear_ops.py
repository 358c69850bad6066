import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from src.utils.linear_ops import (
    FLAG_MAX_ITER,
    FLAG_NONPOSITIVE_CURVATURE,
    FLAG_SINGULAR,
    SymmetricSystem,
    restricted_gram,
    restricted_gram_operator,
    solve_cg,
    solve_direct,
)


def random_spd(rng, dim):
    B = rng.standard_normal((dim, dim))
    return B.T @ B + dim * np.eye(dim)


class TestSolveDirect:
    def test_identity(self):
        rhs = np.array([1.0, -2.0, 3.0])
        result = solve_direct(SymmetricSystem(np.eye(3), rhs))
        assert result.converged
        assert_allclose(result.x, rhs)

    def test_singular_matrix_is_flagged(self):
        result = solve_direct(SymmetricSystem(np.diag([2.0, 0.0]), np.array([1.0, 1.0])))
        assert not result.converged
        assert result.x is None
        assert result.flag == FLAG_SINGULAR

    def test_random_spd(self, rng):
        M = random_spd(rng, 20)
        rhs = rng.standard_normal(20)
        result = solve_direct(SymmetricSystem(M, rhs))
        assert result.converged
        assert np.linalg.norm(M @ result.x - rhs) <= 1e-10
        assert_allclose(result.x, np.linalg.solve(M, rhs), rtol=1e-8, atol=1e-12)

    def test_indefinite_but_nonsingular(self):
        M = np.array([[1.0, 0.0], [0.0, -2.0]])
        result = solve_direct(SymmetricSystem(M, np.array([1.0, 1.0])))
        assert result.converged
        assert_allclose(result.x, [1.0, -0.5])


class TestSolveCG:
    def test_identity_converges_in_one_iteration(self):
        result = solve_cg(SymmetricSystem(np.eye(4), np.ones(4)))
        assert result.converged
        assert result.iterations == 1
        assert_allclose(result.x, np.ones(4))

    def test_matches_direct_solve(self, rng):
        M = random_spd(rng, 100)
        rhs = rng.standard_normal(100)
        cg = solve_cg(SymmetricSystem(M, rhs))
        direct = solve_direct(SymmetricSystem(M, rhs))
        assert cg.converged and direct.converged
        assert_allclose(cg.x, direct.x, rtol=1e-7, atol=1e-9)

    def test_negative_curvature_is_flagged(self):
        M = np.diag([1.0, -1.0])
        result = solve_cg(SymmetricSystem(M, np.array([0.0, 1.0])))
        assert not result.converged
        assert result.flag == FLAG_NONPOSITIVE_CURVATURE

    def test_iteration_cap(self, rng):
        M = random_spd(rng, 30)
        result = solve_cg(SymmetricSystem(M, rng.standard_normal(30)), tol=1e-14, maxit=2)
        assert not result.converged
        assert result.flag == FLAG_MAX_ITER

    def test_zero_rhs(self):
        result = solve_cg(SymmetricSystem(np.eye(3), np.zeros(3)))
        assert result.converged
        assert_allclose(result.x, np.zeros(3))

    def test_operator_input(self, rng):
        A = rng.standard_normal((40, 15))
        support = np.arange(0, 15, 2)
        operator = restricted_gram_operator(A, support, shift=1.0)
        rhs = rng.standard_normal(support.size)
        result = solve_cg(SymmetricSystem(operator, rhs))
        expected = np.linalg.solve(restricted_gram(A, support, shift=1.0), rhs)
        assert result.converged
        assert_allclose(result.x, expected, rtol=1e-7, atol=1e-9)


class TestRestrictedGram:
    def test_dense_and_sparse_agree(self, rng):
        A = rng.standard_normal((30, 10))
        A[np.abs(A) < 1.0] = 0.0
        weights = rng.random(30)
        support = np.array([0, 4, 7])
        dense = restricted_gram(A, support, weights, 0.5)
        sparse = restricted_gram(sp.csr_matrix(A), support, weights, 0.5)
        block = A[:, support]
        expected = block.T @ (weights[:, None] * block) + 0.5 * np.eye(3)
        assert_allclose(dense, expected, atol=1e-12)
        assert_allclose(sparse, expected, atol=1e-12)

    def test_operator_matches_matrix(self, rng):
        A = rng.standard_normal((30, 10))
        weights = rng.random(30)
        support = np.array([1, 2, 9])
        operator = restricted_gram_operator(A, support, weights, 0.3)
        v = rng.standard_normal(3)
        assert_allclose(operator @ v, restricted_gram(A, support, weights, 0.3) @ v, atol=1e-12)

    @pytest.mark.parametrize("dim", [5, 50, 200])
    def test_direct_and_cg_agree(self, rng, dim):
        M = random_spd(rng, dim)
        rhs = rng.standard_normal(dim)
        assert_allclose(
            solve_cg(SymmetricSystem(M, rhs)).x,
            solve_direct(SymmetricSystem(M, rhs)).x,
            rtol=1e-7,
            atol=1e-9,
        )
