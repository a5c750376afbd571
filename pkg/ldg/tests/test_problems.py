import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from ldg.energy import a_op
from ldg.mesh import DomainKind
from ldg.problems import (
    PROBLEMS,
    example_degenerate,
    example_linear,
    example_neumann_smoke,
    example_regular,
    example_smooth,
    get_problem,
)

STEP = 1e-5


def _pentagon_points(rng, n, keep=lambda r: r > 0.05):
    points = []
    while len(points) < n:
        x, y = rng.uniform(-1.0, 1.0, 2)
        if y - x + 1.0 >= 0.0 and keep(np.hypot(x, y)):
            points.append((x, y))
    return np.array(points)


def _square_points(rng, n):
    return rng.uniform(1.0, 2.0, (n, 2))


def _divergence(stress, x, y, h=STEP):
    dx = (stress(x + h, y)[..., 0] - stress(x - h, y)[..., 0]) / (2.0 * h)
    dy = (stress(x, y + h)[..., 1] - stress(x, y - h)[..., 1]) / (2.0 * h)
    return dx + dy


def _cases():
    rng = np.random.default_rng(0)
    away_from_kink = lambda r: abs(r - 0.3) > 0.05 and r > 0.05
    return [
        (example_linear(), _pentagon_points(rng, 200)),
        (example_regular(0.0, 1.5), _pentagon_points(rng, 200)),
        (example_regular(7.0, 4.0), _pentagon_points(rng, 200)),
        (example_degenerate(4.0), _pentagon_points(rng, 200, away_from_kink)),
        (example_smooth(1.5), _square_points(rng, 200)),
        (example_smooth(3.0), _square_points(rng, 200)),
        (example_neumann_smoke(), _square_points(rng, 200)),
    ]


class ExampleValueTests(SimpleTestCase):
    def test_linear_case(self):
        problem = example_linear()
        self.assertEqual(problem.p, 2.0)
        self.assertEqual(problem.domain.kind, DomainKind.PENTAGON)
        self.assertAlmostEqual(float(problem.u(0.0, 0.0)), 1.0)
        self.assertAlmostEqual(float(problem.f(0.0, 0.0)), np.pi ** 2, places=12)
        x, y = np.array([0.3, -0.2]), np.array([0.1, 0.7])
        assert_allclose(problem.stress(x, y), problem.q(x, y))

    def test_regular_case(self):
        problem = example_regular(0.0, 1.5)
        self.assertAlmostEqual(float(np.linalg.norm(problem.q(1.0, 0.0))), 0.25)
        assert_allclose(problem.q(1.0, 0.0), [-0.25, 0.0])
        self.assertAlmostEqual(float(np.linalg.norm(problem.stress(1.0, 0.0))), 0.5)
        self.assertAlmostEqual(float(problem.u(1.0, 0.0)), 0.0)
        self.assertEqual(float(example_regular(7.0, 4.0).f(0.0, 0.0)), 0.0)

    def test_regular_rejects_negative_sigma(self):
        with self.assertRaises(ValueError):
            example_regular(-1.0, 1.5)

    def test_degenerate_case(self):
        problem = example_degenerate(4.0)
        inside = np.array([[0.0, 0.0], [0.1, 0.2], [-0.2, 0.0]])
        x, y = inside.T
        assert_allclose(problem.u(x, y), 0.0)
        assert_allclose(problem.q(x, y), 0.0)
        assert_allclose(problem.stress(x, y), 0.0)
        assert_allclose(problem.f(x, y), 0.0)
        self.assertAlmostEqual(float(problem.u(1.3, 0.0)), 1.0, places=12)
        self.assertAlmostEqual(float(problem.f(0.3 + 1e-12, 0.0)), 0.0, places=12)

    def test_smooth_case(self):
        problem = example_smooth(3.0)
        self.assertEqual(problem.domain.kind, DomainKind.SQUARE)
        self.assertAlmostEqual(float(problem.u(1.0, 1.0)), 2.0 ** 0.25, places=14)
        assert_allclose(problem.f(np.array([1.2, 1.7]), np.array([1.5, 1.1])), 0.0)
        inward = example_smooth(1.5).stress(1.5, 1.5)
        self.assertTrue(np.all(inward < 0.0))
        with self.assertRaises(ValueError):
            example_smooth(2.0)

    def test_neumann_smoke_case(self):
        problem = example_neumann_smoke()
        self.assertTrue(problem.has_neumann)
        y = np.linspace(1.0, 2.0, 5)
        normal = np.tile([1.0, 0.0], (5, 1))
        assert_allclose(problem.neumann_data(np.full(5, 2.0), y, normal), 4.0)
        assert_allclose(problem.f(np.array([1.1, 1.9]), np.array([1.3, 1.4])), -2.0)
        self.assertFalse(example_linear().has_neumann)


class ManufacturedSolutionTests(SimpleTestCase):
    def test_stress_is_a_of_gradient(self):
        for problem, points in _cases():
            x, y = points.T
            assert_allclose(problem.stress(x, y), a_op(problem.q(x, y), problem.p), rtol=1e-10, atol=1e-13,
                            err_msg=problem.description)

    def test_gradient_matches_finite_differences(self):
        h = 1e-6
        for problem, points in _cases():
            x, y = points.T
            difference = np.stack([
                (problem.u(x + h, y) - problem.u(x - h, y)) / (2.0 * h),
                (problem.u(x, y + h) - problem.u(x, y - h)) / (2.0 * h),
            ], axis=-1)
            exact = problem.q(x, y)
            scale = np.maximum(1.0, np.abs(exact))
            self.assertLess(np.max(np.abs(difference - exact) / scale), 1e-6, problem.description)

    def test_source_is_minus_divergence(self):
        for problem, points in _cases():
            x, y = points.T
            divergence = _divergence(problem.stress, x, y)
            f = problem.f(x, y)
            self.assertLess(np.max(np.abs(-divergence - f) / np.maximum(1.0, np.abs(f))), 1e-4, problem.description)

    def test_radial_symmetry(self):
        rng = np.random.default_rng(1)
        for problem in (example_regular(0.0, 1.5), example_regular(7.0, 4.0), example_degenerate(4.0)):
            x, y = rng.uniform(-0.7, 0.7, (2, 100))
            rotated = (-y, x)
            assert_allclose(problem.u(*rotated), problem.u(x, y), atol=1e-12)
            for field in (problem.q, problem.stress):
                assert_allclose(np.linalg.norm(field(*rotated), axis=-1), np.linalg.norm(field(x, y), axis=-1),
                                atol=1e-12)


class RegistryTests(SimpleTestCase):
    def test_every_id_builds(self):
        for name in ('linear', 'regular', 'degenerate', 'smooth', 'neumann-smoke'):
            self.assertIn(name, PROBLEMS)
            self.assertEqual(get_problem(name).name, name)

    def test_overrides(self):
        problem = get_problem('regular', p=4.0, sigma=7.0)
        self.assertEqual(problem.p, 4.0)
        self.assertEqual(problem.radial_exponent, 7.0)
        self.assertEqual(get_problem('smooth', p=1.5).p, 1.5)

    def test_fixed_exponent_is_kept(self):
        with self.assertLogs('ldg.problems', level='WARNING'):
            self.assertEqual(get_problem('linear', p=3.0).p, 2.0)

    def test_unknown_problem(self):
        with self.assertRaises(ValueError):
            get_problem('hexagon')
