import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from ldg.dgspace import (
    DGFunction,
    build_space,
    evaluate,
    inverse_mass_matrix,
    l2_project,
    mass_matrix,
    mass_solve,
    sample,
    zeros,
)
from ldg.tests.helpers import interior_face, pentagon, square


def _reference_point(mesh, element, point):
    corners = mesh.vertices[mesh.elements[element]]
    jacobian = np.stack([corners[1] - corners[0], corners[2] - corners[0]], axis=-1)
    return np.linalg.solve(jacobian, np.asarray(point) - corners[0])


def _l2_error(space, fn, field):
    difference = fn.values() - sample(space, field, space.quad_points)
    return np.sqrt(np.einsum('eq,ecq->', space.quad_weights, difference ** 2))


class BuildSpaceTests(SimpleTestCase):
    def test_pentagon_dof_counts(self):
        mesh = pentagon()
        self.assertEqual(build_space(mesh, 1).n_dofs, 21)
        self.assertEqual(build_space(mesh, 6).n_dofs, 196)

    def test_vector_space_dof_count(self):
        mesh = square()
        self.assertEqual(build_space(mesh, 2, components=2).n_dofs, 12 * mesh.n_elements)

    def test_rejects_degrees_outside_range(self):
        for k in (0, 7):
            with self.assertRaises(ValueError):
                build_space(pentagon(), k)

    def test_element_mass_blocks_are_spd(self):
        space = build_space(pentagon(), 3)
        dense = mass_matrix(space).toarray()
        assert_allclose(dense, dense.T, atol=1e-15)
        np.linalg.cholesky(dense)
        assert_allclose(inverse_mass_matrix(space) @ dense, np.eye(space.n_dofs), atol=1e-9)


class ProjectionTests(SimpleTestCase):
    def test_reproduces_polynomials_in_the_space(self):
        space = build_space(pentagon(1), 2)
        field = lambda x, y: 1.0 + x * y - 0.5 * y ** 2
        fn = l2_project(space, field)
        assert_allclose(fn.values(), sample(space, field, space.quad_points), atol=1e-11)

    def test_zero_field(self):
        space = build_space(pentagon(), 2)
        assert_allclose(l2_project(space, lambda x, y: 0.0).coeffs, 0.0)

    def test_projection_is_idempotent(self):
        space = build_space(pentagon(), 1)
        fn = l2_project(space, lambda x, y: x)
        again = mass_solve(space, space.moments(fn.values()))
        assert_allclose(again, fn.coeffs, atol=1e-13)

    def test_vector_projection(self):
        space = build_space(square(), 1, components=2)
        fn = l2_project(space, lambda x, y: np.stack([x, -y], axis=-1))
        values = fn.values()
        assert_allclose(values[:, 0], space.quad_points[..., 0], atol=1e-12)
        assert_allclose(values[:, 1], -space.quad_points[..., 1], atol=1e-12)

    def test_error_is_orthogonal_to_the_space(self):
        space = build_space(pentagon(1), 2)
        field = lambda x, y: np.exp(x) * np.sin(2.0 * y)
        fn = l2_project(space, field)
        residual = space.moments(sample(space, field, space.quad_points) - fn.values())
        scale = space.moments(sample(space, field, space.quad_points))
        rng = np.random.default_rng(11)
        for _ in range(20):
            v = rng.standard_normal(space.n_dofs)
            self.assertLess(abs(residual @ v), 1e-10 * (1.0 + abs(scale @ v)))

    def test_best_approximation_rate(self):
        field = lambda x, y: np.exp(x) * np.sin(2.0 * y)
        for k in (1, 2):
            errors = []
            for level in (1, 2, 3):
                space = build_space(pentagon(level), k)
                errors.append(_l2_error(space, l2_project(space, field), field))
            rate = np.log2(errors[-2] / errors[-1])
            self.assertAlmostEqual(rate, k + 1, delta=0.2)


class EvaluateTests(SimpleTestCase):
    def test_constant_function(self):
        space = build_space(pentagon(), 3)
        fn = l2_project(space, lambda x, y: 1.0)
        # Bernstein coefficients of the constant one are all one
        assert_allclose(fn.coeffs, 1.0, atol=1e-12)
        for point in ([0.0, 0.0], [0.2, 0.7], [1.0 / 3.0, 1.0 / 3.0]):
            self.assertAlmostEqual(evaluate(fn, 4, point), 1.0, places=12)

    def test_projected_x_at_centroid(self):
        mesh = pentagon()
        fn = l2_project(build_space(mesh, 1), lambda x, y: x)
        for element in range(mesh.n_elements):
            centroid = mesh.vertices[mesh.elements[element]].mean(axis=0)
            self.assertAlmostEqual(fn.evaluate(element, [1.0 / 3.0, 1.0 / 3.0]), centroid[0], delta=1e-13)

    def test_both_sides_of_an_edge_agree(self):
        mesh = pentagon(1)
        fn = l2_project(build_space(mesh, 2), lambda x, y: x + 2.0 * y)
        face = interior_face(mesh)
        point = mesh.vertices[mesh.faces[face]].mean(axis=0) + 0.1 * np.diff(mesh.vertices[mesh.faces[face]], axis=0)[0]
        left, right = mesh.face_elements[face]
        value_left = evaluate(fn, left, _reference_point(mesh, left, point))
        value_right = evaluate(fn, right, _reference_point(mesh, right, point))
        self.assertAlmostEqual(value_left, value_right, delta=1e-11)

    def test_traces_match_evaluation(self):
        mesh = pentagon()
        fn = l2_project(build_space(mesh, 2), lambda x, y: x * y)
        faces = np.arange(mesh.n_faces)
        points = fn.space.face_points
        assert_allclose(fn.traces(faces, 0)[:, 0], points[..., 0] * points[..., 1], atol=1e-12)


class MassSolveTests(SimpleTestCase):
    def test_round_trip(self):
        space = build_space(pentagon(1), 3, components=2)
        c = np.random.default_rng(5).standard_normal(space.n_dofs)
        assert_allclose(mass_solve(space, mass_matrix(space) @ c), c, rtol=1e-11, atol=1e-11)

    def test_zero_rhs(self):
        space = build_space(pentagon(), 2)
        assert_allclose(mass_solve(space, np.zeros(space.n_dofs)), 0.0)

    def test_constant_moments_match_dense_inverse(self):
        space = build_space(pentagon(), 2)
        rhs = space.moments(np.ones((space.mesh.n_elements, 1, space.volume_rule.size)))
        dense = np.linalg.solve(mass_matrix(space).toarray(), rhs)
        assert_allclose(mass_solve(space, rhs), dense, atol=1e-12)
        assert_allclose(dense, 1.0, atol=1e-11)


class DGFunctionTests(SimpleTestCase):
    def test_arithmetic(self):
        space = build_space(pentagon(), 1)
        a = l2_project(space, lambda x, y: x)
        b = l2_project(space, lambda x, y: y)
        assert_allclose((2.0 * a - b + b).coeffs, 2.0 * a.coeffs)
        assert_allclose((-a).coeffs, -a.coeffs)
        copy = a.copy()
        copy.coeffs[0] = 99.0
        self.assertNotEqual(a.coeffs[0], 99.0)

    def test_rejects_wrong_length(self):
        space = build_space(pentagon(), 1)
        with self.assertRaises(ValueError):
            DGFunction(space, np.zeros(space.n_dofs + 1))

    def test_rejects_mixed_spaces(self):
        first = build_space(pentagon(), 1)
        second = build_space(pentagon(), 1)
        with self.assertRaises(ValueError):
            zeros(first) + zeros(second)
