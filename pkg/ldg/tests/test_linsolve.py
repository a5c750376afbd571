from unittest import mock

import numpy as np
import scipy.sparse as sp
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from ldg.dgspace import l2_project, sample, zeros
from ldg.energy import EnergyContext, grad_Jh
from ldg.exceptions import LinearSolveError
from ldg.linsolve import (
    REFINEMENT_STEPS,
    PrecondSystem,
    assemble_precond,
    descent_norm_squared,
    poisson_initial_guess,
    snapshot_id,
    solve_spd,
    weight,
)
from ldg.problems import example_linear
from ldg.tests.helpers import pentagon, square, two_elements


def _context(p, mesh=None, k=2):
    return EnergyContext.build(
        mesh or pentagon(1), k, p, source=lambda x, y: 1.0 + x, dirichlet=lambda x, y: x * y - 0.5 * y,
    )


class WeightTests(SimpleTestCase):
    def test_three_regimes(self):
        r = np.array([0.0, 1.0, 4.0])
        assert_allclose(weight(r, 2.0, 0.5), 1.0)
        assert_allclose(weight(r, 1.5, 0.5), (0.5 + r) ** -0.5)
        assert_allclose(weight(r, 3.0, 0.5), 0.5 + r)


class AssemblePrecondTests(SimpleTestCase):
    def test_p2_is_independent_of_the_iterate(self):
        ctx = _context(2.0)
        rng = np.random.default_rng(0)
        first = assemble_precond(ctx, rng.standard_normal(ctx.scalar_space.n_dofs))
        second = assemble_precond(ctx, rng.standard_normal(ctx.scalar_space.n_dofs), eps=1e-3)
        self.assertEqual(abs(first.matrix - second.matrix).max(), 0.0)
        self.assertNotEqual(first.snapshot, second.snapshot)

    def test_p3_at_zero_is_eps_times_p2(self):
        ctx = EnergyContext.build(pentagon(), 2, 3.0)
        start = zeros(ctx.scalar_space)
        weighted = assemble_precond(ctx, start, eps=1e-3).matrix.toarray()
        plain = assemble_precond(ctx.with_exponent(2.0), start).matrix.toarray()
        assert_allclose(weighted, 1e-3 * plain, rtol=1e-12, atol=1e-15 * np.abs(plain).max())

    def test_matches_polarized_descent_norm(self):
        ctx = _context(1.5, two_elements(), k=1)
        n = ctx.scalar_space.n_dofs
        u = np.random.default_rng(1).standard_normal(n)
        basis = np.eye(n)
        dense = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                plus = descent_norm_squared(ctx, u, basis[i] + basis[j], 1e-8)
                minus = descent_norm_squared(ctx, u, basis[i] - basis[j], 1e-8)
                dense[i, j] = 0.25 * (plus - minus)
        assert_allclose(assemble_precond(ctx, u, 1e-8).matrix.toarray(), dense, rtol=1e-10, atol=1e-10 * np.abs(dense).max())

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(2)
        for p in (1.5, 2.0, 3.0):
            ctx = _context(p)
            n = ctx.scalar_space.n_dofs
            u = rng.standard_normal(n)
            matrix = assemble_precond(ctx, u, 1e-14).matrix
            self.assertLessEqual(abs(matrix - matrix.T).max(), 1e-12 * abs(matrix).max())
            for _ in range(50):
                x = rng.standard_normal(n)
                quadratic = x @ (matrix @ x)
                self.assertGreater(quadratic, 0.0)
                assert_allclose(quadratic, descent_norm_squared(ctx, u, x, 1e-14), rtol=1e-10)

    def test_large_gradients_keep_weights_finite(self):
        ctx = _context(1.5)
        u = 1e12 * np.random.default_rng(3).standard_normal(ctx.scalar_space.n_dofs)
        matrix = assemble_precond(ctx, u, 1e-14).matrix
        self.assertTrue(np.all(np.isfinite(matrix.data)))
        x = np.ones(ctx.scalar_space.n_dofs)
        self.assertGreater(x @ (matrix @ x), 0.0)

    def test_rejects_non_positive_eps(self):
        ctx = _context(3.0)
        start = zeros(ctx.scalar_space)
        for eps in (None, 0.0, -1.0):
            with self.assertRaises(ValueError):
                assemble_precond(ctx, start, eps)
        assemble_precond(ctx.with_exponent(2.0), start, 0.0)

    def test_snapshot_identifies_the_iterate(self):
        a = np.arange(4.0)
        self.assertEqual(snapshot_id(a), snapshot_id(a.copy()))
        self.assertNotEqual(snapshot_id(a), snapshot_id(a + 1e-15 * np.arange(1, 5)))


class SolveTests(SimpleTestCase):
    def test_round_trip(self):
        ctx = _context(2.0, pentagon())
        rng = np.random.default_rng(4)
        system = assemble_precond(ctx, zeros(ctx.scalar_space))
        c = rng.standard_normal(system.size)
        for method in ('cg', 'direct'):
            x = solve_spd(system, system.matrix @ c, method).coeffs
            self.assertLess(np.linalg.norm(x - c) / np.linalg.norm(c), 1e-9)

    def test_residual_contract(self):
        ctx = _context(3.0)
        rng = np.random.default_rng(6)
        system = assemble_precond(ctx, rng.standard_normal(ctx.scalar_space.n_dofs), 1e-14)
        rhs = rng.standard_normal(system.size)
        x = solve_spd(system, rhs).coeffs
        self.assertLessEqual(np.linalg.norm(system.matrix @ x - rhs), 1e-12 * np.linalg.norm(rhs))

    def test_zero_rhs(self):
        ctx = _context(2.0)
        system = assemble_precond(ctx, zeros(ctx.scalar_space))
        assert_allclose(solve_spd(system, np.zeros(system.size)).coeffs, 0.0)

    def test_two_element_dense_oracle(self):
        ctx = _context(2.0, two_elements(), k=1)
        system = assemble_precond(ctx, zeros(ctx.scalar_space))
        rhs = np.random.default_rng(5).standard_normal(system.size)
        expected = np.linalg.solve(system.matrix.toarray(), rhs)
        assert_allclose(solve_spd(system, rhs).coeffs, expected, rtol=1e-10, atol=1e-10)

    def test_rejects_bad_input(self):
        ctx = _context(2.0)
        system = assemble_precond(ctx, zeros(ctx.scalar_space))
        with self.assertRaises(ValueError):
            solve_spd(system, np.ones(system.size + 1))
        with self.assertRaises(ValueError):
            solve_spd(system, np.ones(system.size), 'gmres')

    def test_singular_system_fails(self):
        ctx = _context(2.0)
        n = ctx.scalar_space.n_dofs
        singular = PrecondSystem(space=ctx.scalar_space, matrix=sp.csr_matrix((n, n)), snapshot='', eps=0.0, p=2.0)
        with self.assertRaises(LinearSolveError):
            solve_spd(singular, np.ones(n), 'direct')


class _ScaledFactor:
    """Stands in for a SuperLU factor whose solves are off by a fixed factor."""

    def __init__(self, matrix, scale):
        self.dense = matrix.toarray()
        self.scale = scale
        self.calls = 0

    def solve(self, rhs):
        self.calls += 1
        return self.scale * np.linalg.solve(self.dense, rhs)


class RefinementTests(SimpleTestCase):
    def setUp(self):
        ctx = _context(2.0, two_elements(), k=1)
        self.system = assemble_precond(ctx, zeros(ctx.scalar_space))
        self.rhs = np.random.default_rng(7).standard_normal(self.system.size)

    def test_refinement_reaches_the_tolerance(self):
        factor = _ScaledFactor(self.system.matrix, 1.0 + 1e-8)
        with mock.patch('ldg.linsolve.splu', return_value=factor):
            x = solve_spd(self.system, self.rhs, 'direct').coeffs
        self.assertEqual(factor.calls, 2)
        self.assertLessEqual(np.linalg.norm(self.system.matrix @ x - self.rhs), 1e-12 * np.linalg.norm(self.rhs))

    def test_inaccurate_factor_is_rejected(self):
        factor = _ScaledFactor(self.system.matrix, 0.5)
        with mock.patch('ldg.linsolve.splu', return_value=factor):
            with self.assertLogs('ldg.linsolve', 'ERROR'):
                with self.assertRaises(LinearSolveError):
                    solve_spd(self.system, self.rhs, 'direct')
        self.assertEqual(factor.calls, 1 + REFINEMENT_STEPS)

    def test_cg_miss_falls_back_to_the_refined_factor(self):
        factor = _ScaledFactor(self.system.matrix, 1.0 + 1e-8)
        missed = (np.zeros(self.system.size), 1)
        with mock.patch('ldg.linsolve.cg', return_value=missed), \
                mock.patch('ldg.linsolve.splu', return_value=factor):
            x = solve_spd(self.system, self.rhs).coeffs
        assert_allclose(x, np.linalg.solve(self.system.matrix.toarray(), self.rhs), rtol=1e-10, atol=1e-10)


class PoissonGuessTests(SimpleTestCase):
    def test_recovers_linear_data(self):
        ctx = EnergyContext.build(square(), 2, 3.0, dirichlet=lambda x, y: x)
        guess = poisson_initial_guess(ctx)
        difference = guess.values() - sample(ctx.scalar_space, lambda x, y: x, ctx.scalar_space.quad_points)
        self.assertLess(np.sqrt(np.sum(ctx.scalar_space.quad_weights * difference[:, 0] ** 2)), 1e-9)
        assert_allclose(guess.coeffs, l2_project(ctx.scalar_space, lambda x, y: x).coeffs, atol=1e-9)

    def test_linear_case_residual(self):
        problem = example_linear()
        ctx = EnergyContext.for_problem(problem, pentagon(1), 2)
        guess = poisson_initial_guess(ctx, 'direct')
        residual = grad_Jh(ctx, guess)
        self.assertLess(np.abs(residual).max(), 1e-9 * np.abs(ctx.load).max())

    def test_zero_data(self):
        ctx = EnergyContext.build(pentagon(), 1, 1.5)
        assert_allclose(poisson_initial_guess(ctx).coeffs, 0.0)
