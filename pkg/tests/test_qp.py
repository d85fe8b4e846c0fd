"""Active-set quadratic programming against analytic and iterative oracles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tendonid.errors import DataError
from tendonid.qp import (
    QuadraticProgram,
    solve_qp,
    solve_qp_projected_gradient,
)


def box_qp(H, g, lower, upper):
    n = g.size
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate([upper, -lower])
    return QuadraticProgram(H, g, G, h)


def random_box_qp(seed, n):
    """Strictly convex box QP with the unconstrained optimum pushed
    partly outside the box so some constraints activate."""
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    H = M @ M.T + n * np.eye(n)
    g = rng.normal(scale=n, size=n)
    lower = rng.uniform(-1.0, -0.2, size=n)
    upper = rng.uniform(0.2, 1.0, size=n)
    return box_qp(H, g, lower, upper), lower, upper


class TestProblemValidation:
    def test_asymmetric_h_rejected(self):
        H = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(DataError):
            QuadraticProgram(H, np.zeros(2), np.zeros((0, 2)), np.zeros(0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            QuadraticProgram(np.eye(2), np.zeros(3), np.zeros((0, 2)),
                             np.zeros(0))
        with pytest.raises(DataError):
            QuadraticProgram(np.eye(2), np.zeros(2), np.eye(2), np.zeros(3))

    def test_indefinite_h_rejected(self):
        qp = QuadraticProgram(np.diag([1.0, -1.0]), np.zeros(2),
                              np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(DataError):
            solve_qp(qp)

    def test_objective_value(self):
        qp = QuadraticProgram(2.0 * np.eye(2), np.array([1.0, -1.0]),
                              np.zeros((0, 2)), np.zeros(0))
        assert qp.objective(np.array([1.0, 2.0])) == pytest.approx(5.0 - 1.0)


class TestAnalyticCases:
    def test_unconstrained_optimum(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(4, 4))
        H = M @ M.T + 4 * np.eye(4)
        g = rng.normal(size=4)
        qp = QuadraticProgram(H, g, np.zeros((0, 4)), np.zeros(0))
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert_allclose(sol.z, -np.linalg.solve(H, g), rtol=1e-10)
        assert sol.max_kkt_residual < 1e-9

    def test_scalar_clip(self):
        # min (z - 3)^2 subject to z <= 1: optimum pinned at the bound
        # with multiplier equal to the gradient magnitude there
        qp = QuadraticProgram(np.array([[2.0]]), np.array([-6.0]),
                              np.array([[1.0]]), np.array([1.0]))
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert_allclose(sol.z, [1.0], atol=1e-12)
        assert_allclose(sol.multipliers, [4.0], atol=1e-10)

    def test_inactive_constraints_have_zero_multipliers(self):
        qp = box_qp(np.eye(3), np.array([0.1, -0.1, 0.0]),
                    np.full(3, -10.0), np.full(3, 10.0))
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert_allclose(sol.z, [-0.1, 0.1, 0.0], atol=1e-12)
        assert_allclose(sol.multipliers, np.zeros(6), atol=1e-12)

    def test_equality_corner(self):
        # optimum outside the box in every coordinate: solution sits at
        # the nearest corner for a diagonal Hessian
        H = np.diag([2.0, 4.0])
        g = np.array([-10.0, 12.0])
        qp = box_qp(H, g, np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        sol = solve_qp(qp)
        assert_allclose(sol.z, [1.0, -1.0], atol=1e-12)


class TestAgainstProjectedGradient:
    @pytest.mark.parametrize("seed", range(10))
    def test_random_box_problems(self, seed):
        n = 3 + seed * 2
        qp, lower, upper = random_box_qp(seed, n)
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        ref = solve_qp_projected_gradient(qp, lower, upper)
        assert qp.objective(sol.z) <= qp.objective(ref) + 1e-6
        assert abs(qp.objective(sol.z) - qp.objective(ref)) < 1e-6
        assert sol.max_kkt_residual < 1e-8

    def test_multipliers_nonnegative(self):
        qp, *_ = random_box_qp(3, 8)
        sol = solve_qp(qp)
        assert np.min(sol.multipliers) >= -1e-12


class TestStartingPoints:
    def test_warm_start_agrees(self):
        qp, lower, upper = random_box_qp(5, 6)
        cold = solve_qp(qp)
        warm = solve_qp(qp, z0=0.5 * (lower + upper))
        assert_allclose(warm.z, cold.z, atol=1e-9)

    def test_infeasible_start_recovered(self):
        qp, lower, upper = random_box_qp(6, 5)
        sol = solve_qp(qp, z0=upper + 5.0)
        assert sol.status == "optimal"
        violation = np.max(qp.G @ sol.z - qp.h)
        assert violation <= 1e-9


class TestInfeasible:
    def test_contradictory_bounds(self):
        # z <= -1 and -z <= -1 cannot both hold
        qp = QuadraticProgram(np.eye(1), np.zeros(1),
                              np.array([[1.0], [-1.0]]),
                              np.array([-1.0, -1.0]))
        sol = solve_qp(qp)
        assert sol.status == "infeasible"

    def test_deterministic_repeat(self):
        qp, *_ = random_box_qp(8, 12)
        a = solve_qp(qp)
        b = solve_qp(qp)
        assert_allclose(a.z, b.z, rtol=0, atol=0)
        assert a.iterations == b.iterations


class TestProjectedGradientReference:
    def test_matches_analytic_clip(self):
        qp = QuadraticProgram(np.array([[2.0]]), np.array([-6.0]),
                              np.zeros((0, 1)), np.zeros(0))
        z = solve_qp_projected_gradient(qp, np.array([-1.0]), np.array([1.0]))
        assert_allclose(z, [1.0], atol=1e-9)

    def test_interior_solution(self):
        rng = np.random.default_rng(11)
        M = rng.normal(size=(3, 3))
        H = M @ M.T + 3 * np.eye(3)
        g = 0.01 * rng.normal(size=3)
        qp = QuadraticProgram(H, g, np.zeros((0, 3)), np.zeros(0))
        z = solve_qp_projected_gradient(qp, np.full(3, -5.0), np.full(3, 5.0))
        assert_allclose(z, -np.linalg.solve(H, g), atol=1e-8)
