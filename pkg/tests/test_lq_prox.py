import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.lq_prox import (
    DegenerateProblemError,
    ProxSpec,
    TieRule,
    lambda_upper_bound,
    lq_penalty,
    prox_constants,
    prox_scalar,
    prox_vector,
)


def phi(z, a, weight, q):
    z = np.asarray(z, dtype=float)
    penalty = np.where(z == 0, 0.0, np.abs(z) ** q)
    return 0.5 * (z - a) ** 2 + weight * penalty


def golden_section(fun, lo, hi, iterations=80):
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(iterations):
        left = hi - ratio * (hi - lo)
        right = lo + ratio * (hi - lo)
        go_left = fun(left) < fun(right)
        hi = np.where(go_left, right, hi)
        lo = np.where(go_left, lo, left)
    return 0.5 * (lo + hi)


def brute_force_minimum(a, weight, q, points=20_001, chunk=100):
    """
    min_z phi(z) per case: grid over [-|a|-1, |a|+1], golden-section refinement
    around the best grid point (kept on one side of zero), and z = 0 itself.
    """
    t = np.linspace(-1.0, 1.0, points)
    best = np.empty(a.size)
    for start in range(0, a.size, chunk):
        sl = slice(start, start + chunk)
        a_c, w_c, q_c = a[sl], weight[sl], q[sl]
        radius = np.abs(a_c) + 1.0
        grid = radius[:, None] * t[None, :]
        values = phi(grid, a_c[:, None], w_c[:, None], q_c[:, None])
        idx = np.argmin(values, axis=1)
        center = grid[np.arange(idx.size), idx]
        h = radius * (t[1] - t[0])
        lo = np.where(center > 0, np.maximum(center - h, 0.0), center - h)
        hi = np.where(center < 0, np.minimum(center + h, 0.0), center + h)
        refined = golden_section(lambda z: phi(z, a_c, w_c, q_c), lo, hi)
        best[sl] = np.minimum.reduce([
            values[np.arange(idx.size), idx],
            phi(refined, a_c, w_c, q_c),
            phi(np.zeros_like(a_c), a_c, w_c, q_c),
        ])
    return best


class TestProxConstants:
    def test_hard_threshold_constants(self):
        consts = prox_constants(ProxSpec(0.5, 0.0))
        assert consts.c == pytest.approx(1.0)
        assert consts.kappa == pytest.approx(1.0)

    def test_half_constants(self):
        consts = prox_constants(ProxSpec(1.0, 0.5))
        assert consts.c == pytest.approx(1.0)
        assert consts.kappa == pytest.approx(1.5)

    @pytest.mark.parametrize("q", [0.0, 0.3, 0.5, 2.0 / 3.0, 0.9])
    def test_constants_vanish_with_weight(self, q):
        consts = prox_constants(ProxSpec(1e-12, q))
        assert consts.c < 1e-4
        assert consts.kappa < 1e-4

    @pytest.mark.parametrize("q", [0.1, 0.5, 2.0 / 3.0, 0.8])
    @pytest.mark.parametrize("weight", [0.3, 1.0, 2.5])
    def test_threshold_is_a_tie(self, q, weight):
        consts = prox_constants(ProxSpec(weight, q))
        assert phi(0.0, consts.kappa, weight, q) == pytest.approx(
            phi(consts.c, consts.kappa, weight, q), rel=1e-12
        )

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            ProxSpec(0.0, 0.5)
        with pytest.raises(ValueError):
            ProxSpec(1.0, 1.0)
        with pytest.raises(ValueError):
            ProxSpec(1.0, -0.1)


class TestProxScalar:
    def test_hard_threshold_keeps_large_input(self):
        assert prox_scalar(2.0, ProxSpec(0.5, 0.0)) == 2.0

    def test_hard_threshold_zeroes_small_input(self):
        assert prox_scalar(0.5, ProxSpec(0.5, 0.0)) == 0.0

    def test_tie_rules_at_threshold(self):
        assert prox_scalar(1.5, ProxSpec(1.0, 0.5, TieRule.PREFER_ZERO)) == 0.0
        assert prox_scalar(1.5, ProxSpec(1.0, 0.5, TieRule.PREFER_NONZERO)) == pytest.approx(1.0)

    def test_half_nonzero_branch(self):
        assert prox_scalar(2.0, ProxSpec(1.0, 0.5)) == pytest.approx(1.605, abs=1e-3)

    def test_odd_symmetry(self):
        spec = ProxSpec(1.0, 0.5)
        assert prox_scalar(-2.0, spec) == -prox_scalar(2.0, spec)

    @pytest.mark.parametrize("q", [0.2, 0.5, 2.0 / 3.0, 0.9])
    def test_nonzero_output_respects_lower_bound(self, q):
        spec = ProxSpec(0.7, q)
        consts = prox_constants(spec)
        z = prox_scalar(consts.kappa * 1.0001, spec)
        assert z >= consts.c

    def test_rejects_non_finite_input(self):
        with pytest.raises(ValueError):
            prox_scalar(float("nan"), ProxSpec(1.0, 0.5))

    @pytest.mark.slow
    def test_matches_brute_force_minimisation(self, rng):
        cases = 10_000
        a = rng.uniform(-5.0, 5.0, cases)
        weight = rng.uniform(1e-3, 3.0, cases)
        q = rng.uniform(0.0, 0.95, cases)
        q[rng.random(cases) < 0.1] = 0.0
        best = brute_force_minimum(a, weight, q)
        z = np.array([prox_scalar(a[i], ProxSpec(weight[i], q[i])) for i in range(cases)])
        gap = phi(z, a, weight, q) - best
        assert np.max(gap) <= 1e-8

    @pytest.mark.parametrize("q", [0.0, 0.25, 0.5, 2.0 / 3.0, 0.9])
    def test_monotone_thresholding(self, q):
        spec = ProxSpec(0.8, q)
        a = np.linspace(prox_constants(spec).kappa, 12.0, 2001)
        for sign in (1.0, -1.0):
            magnitudes = np.abs(prox_vector(sign * a, spec))
            assert np.all(np.diff(magnitudes) >= 0)

    @pytest.mark.parametrize("q", [0.1, 0.5, 2.0 / 3.0, 0.9])
    @pytest.mark.parametrize("weight", [0.05, 0.6, 4.0])
    def test_root_residual(self, rng, q, weight):
        spec = ProxSpec(weight, q)
        a = prox_constants(spec).kappa + rng.uniform(1e-6, 50.0, 500)
        z = prox_vector(a, spec)
        residual = np.abs(z - a + weight * q * z ** (q - 1.0))
        assert np.all(residual <= 1e-10 * np.maximum(1.0, a))


class TestProxVector:
    def test_zero_vector(self):
        assert_array_equal(prox_vector(np.zeros(4), ProxSpec(0.3, 0.5)), np.zeros(4))

    def test_hard_threshold_vector(self):
        assert_array_equal(prox_vector([2.0, 0.5], ProxSpec(0.5, 0.0)), [2.0, 0.0])

    def test_matches_scalar_calls(self, rng):
        x = rng.uniform(-3.0, 3.0, size=50)
        spec = ProxSpec(0.3, 2.0 / 3.0)
        expected = np.array([prox_scalar(v, spec) for v in x])
        assert_allclose(prox_vector(x, spec), expected, rtol=0, atol=1e-14)


class TestPenaltyAndBound:
    def test_penalty_counts_nonzeros_at_q0(self):
        assert lq_penalty(np.array([1.0, 0.0, -3.0, 0.2]), 0.0) == 3.0

    def test_penalty_half(self):
        assert lq_penalty(np.array([4.0, 0.0, 1.0]), 0.5) == pytest.approx(3.0)

    def test_bound_hard(self):
        assert lambda_upper_bound(np.array([0.5, -2.0]), 1.0, 0.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("q", [0.0, 0.5, 0.9])
    def test_bound_unit_gradient(self, q):
        assert lambda_upper_bound(np.array([1.0, -0.3]), 1.0, q) == pytest.approx(0.5)

    def test_bound_zero_gradient(self):
        with pytest.raises(DegenerateProblemError):
            lambda_upper_bound(np.zeros(3), 1.0, 0.5)
