import math

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose
from pydantic import ValidationError

from ldg.dgspace import DGFunction, zeros
from ldg.descent import GOLDEN, SolverConfig, golden_section, steepest_descent
from ldg.energy import EnergyContext, grad_Jh
from ldg.mesh import build_coarse
from ldg.problems import example_linear, example_regular, example_smooth
from ldg.tests.helpers import pentagon, square


class GoldenSectionTests(SimpleTestCase):
    def test_minimum_at_the_guess(self):
        result = golden_section(lambda x: (x - 1.0) ** 2, 1.0, 1e-8)
        self.assertLessEqual(abs(result.x - 1.0), 1e-8)
        self.assertLessEqual(result.y, 1e-15)

    def test_expansion(self):
        calls = []

        def f(x):
            calls.append(x)
            return (x - 2.0) ** 2

        result = golden_section(f, 0.5, 1e-6)
        self.assertLessEqual(abs(result.x - 2.0), 1e-6)
        assert_allclose(calls[:4], [0.0, 0.5, 0.5 / GOLDEN, 0.5 / GOLDEN ** 2])
        self.assertEqual(result.evaluations, len(calls))

    def test_shrink_toward_zero(self):
        result = golden_section(lambda x: x, 1.0, 1e-4)
        self.assertLessEqual(result.x, 1e-4)
        self.assertLessEqual(result.y, 1.0)

    def test_one_evaluation_per_refinement(self):
        calls = []

        def f(x):
            calls.append(x)
            return (x - 0.7) ** 2

        golden_section(f, 1.0, 1e-3)
        self.assertEqual(len(calls), len(set(calls)))

    def test_nan_counts_as_worse(self):
        result = golden_section(lambda x: math.nan if x > 1.5 else (x - 1.0) ** 2, 1.0, 1e-8)
        self.assertAlmostEqual(result.x, 1.0, delta=1e-8)

    def test_evaluation_cap(self):
        result = golden_section(lambda x: -x, 1.0, 1e-8, max_evaluations=20)
        self.assertLessEqual(result.evaluations, 20)
        self.assertGreater(result.x, 1.0)

    def test_rejects_non_positive_delta(self):
        with self.assertRaises(ValueError):
            golden_section(lambda x: x, 1.0, 0.0)


class SolverConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = SolverConfig()
        self.assertEqual((cfg.eps, cfg.delta_w, cfg.delta_rho, cfg.max_iters), (1e-14, 1e-16, 1e-16, 500))

    def test_rejects_bad_values(self):
        for bad in ({'max_iters': 0}, {'delta_w': 0.0}, {'eps': -1.0}, {'delta_rho': math.inf},
                    {'linear_solver': 'gmres'}):
            with self.assertRaises(ValidationError):
                SolverConfig(**bad)


class SteepestDescentTests(SimpleTestCase):
    def test_zero_data_stops_immediately(self):
        ctx = EnergyContext.build(pentagon(), 2, 3.0)
        result = steepest_descent(ctx, SolverConfig(), zeros(ctx.scalar_space))
        self.assertEqual(result.stop_reason, 'wnorm')
        self.assertEqual(result.accepted_steps, 0)
        self.assertEqual(result.passes, 1)
        assert_allclose(result.solution.coeffs, 0.0)
        self.assertEqual([record.iteration for record in result.history], [0, 1])

    def test_p2_converges_in_one_step(self):
        problem = example_linear()
        ctx = EnergyContext.for_problem(problem, build_coarse(problem.domain), 2)
        start = DGFunction(ctx.scalar_space, np.random.default_rng(0).standard_normal(ctx.scalar_space.n_dofs))
        result = steepest_descent(ctx, SolverConfig(eps=0.0), start)
        self.assertEqual(result.accepted_steps, 1)
        self.assertAlmostEqual(result.history[1].rho, 1.0, delta=1e-6)
        self.assertLess(result.stationarity, 1e-6 * np.abs(grad_Jh(ctx, start)).max())

    def test_poisson_start_needs_one_pass_at_p2(self):
        problem = example_linear()
        ctx = EnergyContext.for_problem(problem, build_coarse(problem.domain), 1)
        result = steepest_descent(ctx, SolverConfig(eps=0.0))
        self.assertEqual(result.passes, 1)
        self.assertEqual(result.accepted_steps, 0)

    def test_energy_is_monotone(self):
        problem = example_regular(0.0, 1.5)
        ctx = EnergyContext.for_problem(problem, pentagon(1), 2)
        result = steepest_descent(ctx, SolverConfig(max_iters=60))
        energies = [record.energy for record in result.history]
        self.assertTrue(all(later <= earlier for earlier, later in zip(energies, energies[1:])))
        for record in result.history[1:]:
            if record.rho is not None:
                self.assertGreater(record.rho, 0.0)
                self.assertGreater(record.wnorm, 0.0)
        self.assertGreaterEqual(result.stationarity, 0.0)

    def test_budget_stop(self):
        problem = example_smooth(3.0)
        ctx = EnergyContext.for_problem(problem, square(), 2)
        result = steepest_descent(ctx, SolverConfig(max_iters=2))
        self.assertEqual(result.passes, 2)
        self.assertEqual(result.stop_reason, 'max_iters')
        self.assertEqual(len(result.history), 3)


@tag('slow')
class DescentBehaviourTests(SimpleTestCase):
    def test_regular_case_iteration_counts(self):
        problem = example_regular(0.0, 1.5)
        counts = []
        for level in (0, 1, 2):
            for k in (1, 2):
                ctx = EnergyContext.for_problem(problem, pentagon(level), k)
                counts.append(steepest_descent(ctx, SolverConfig()).passes)
        self.assertTrue(all(5 <= count <= 40 for count in counts), counts)
        self.assertLessEqual(max(counts) / min(counts), 4.0)

    def test_limit_does_not_depend_on_eps(self):
        problem = example_smooth(3.0)
        ctx = EnergyContext.for_problem(problem, square(1), 2)
        solutions = [steepest_descent(ctx, SolverConfig(eps=eps)).solution for eps in (1e-10, 1e-14)]
        difference = solutions[0].values() - solutions[1].values()
        self.assertLess(np.sqrt(np.sum(ctx.scalar_space.quad_weights * difference[:, 0] ** 2)), 1e-6)
