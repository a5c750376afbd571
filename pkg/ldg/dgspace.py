"""
Broken polynomial spaces V_h (scalar) and Q_h / Sigma_h (2-vector) on a mesh.

Degrees of freedom are Bernstein coefficients laid out element-major:
index = (element * components + component) * local_size + basis_function.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .mesh import Mesh
from .quadbasis import bernstein_eval, gauss_segment, gauss_triangle, reference_mass

logger = logging.getLogger(__name__)

MAX_DEGREE = 6


def _face_tables(k: int, t: np.ndarray) -> np.ndarray:
    """Bernstein values on each local face for both traversal directions: (3, 2, nfq, nb)."""
    tables = np.empty((3, 2, len(t), (k + 1) * (k + 2) // 2))
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        for orientation in (0, 1):
            lam = np.zeros((len(t), 3))
            lam[:, a] = 1.0 - t if orientation == 0 else t
            lam[:, b] = t if orientation == 0 else 1.0 - t
            tables[i, orientation] = bernstein_eval(k, lam[:, 1:]).values
    tables.setflags(write=False)
    return tables


def block_diagonal(blocks: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix with the given (n, b, b) blocks on its diagonal."""
    n, b, _ = blocks.shape
    offsets = np.arange(n)[:, None, None] * b
    rows = np.broadcast_to(offsets + np.arange(b)[None, :, None], blocks.shape)
    cols = np.broadcast_to(offsets + np.arange(b)[None, None, :], blocks.shape)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * b, n * b))


class DGSpace:
    """
    Discontinuous P^k space with `components` copies per element.

    Elements are affine images of the reference triangle, so the element
    mass matrix is det(J) times the reference Bernstein Gram matrix and one
    Cholesky factorization serves every element.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int = 1):
        if degree < 1 or degree > MAX_DEGREE:
            raise ValueError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {degree}")
        if components not in (1, 2):
            raise ValueError(f"components must be 1 (V_h) or 2 (Q_h, Sigma_h), got {components}")

        self.mesh = mesh
        self.degree = degree
        self.components = components
        self.local_size = (degree + 1) * (degree + 2) // 2

        self.volume_rule = gauss_triangle(2 * degree)
        self.face_rule = gauss_segment(degree + 1)
        self.basis = bernstein_eval(degree, self.volume_rule.points)
        self.face_basis = _face_tables(degree, self.face_rule.points)

        corners = mesh.vertices[mesh.elements]
        self.jacobians = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=-1)
        self.det = 2.0 * mesh.areas
        self.inverse_jacobians = np.linalg.inv(self.jacobians)
        self.quad_points = corners[:, None, 0, :] + np.einsum('ecd,qd->eqc', self.jacobians, self.volume_rule.points)
        self.quad_weights = self.det[:, None] * self.volume_rule.weights[None, :]

        self.reference_mass = reference_mass(degree)
        self.mass_factor = cho_factor(self.reference_mass)

        t = self.face_rule.points
        a = mesh.vertices[mesh.faces[:, 0]]
        b = mesh.vertices[mesh.faces[:, 1]]
        self.face_points = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        self.face_weights = mesh.face_lengths[:, None] * self.face_rule.weights[None, :]

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_elements * self.components * self.local_size

    @property
    def shape(self):
        return self.mesh.n_elements, self.components, self.local_size

    def compatible(self, other: 'DGSpace') -> bool:
        return self.mesh is other.mesh and self.degree == other.degree

    def values(self, coeffs) -> np.ndarray:
        """Values at the element quadrature points: (Ne, C, nq)."""
        return np.einsum('ecb,qb->ecq', np.reshape(coeffs, self.shape), self.basis.values)

    def gradient_values(self, coeffs) -> np.ndarray:
        """Physical gradients at the element quadrature points: (Ne, C, nq, 2)."""
        reference = np.einsum('ecb,qbd->ecqd', np.reshape(coeffs, self.shape), self.basis.gradients)
        return np.einsum('ecqd,edk->ecqk', reference, self.inverse_jacobians)

    def moments(self, values: np.ndarray) -> np.ndarray:
        """(field, basis function) integrals for field values given at quadrature points."""
        return np.einsum('ecq,eq,qb->ecb', values, self.quad_weights, self.basis.values).ravel()

    def face_table(self, faces: np.ndarray, side: int) -> np.ndarray:
        """Basis values at the face quadrature points seen from one side: (nf, nfq, nb)."""
        local = self.mesh.face_local[faces, side]
        orientation = self.mesh.face_orientation[faces, side]
        return self.face_basis[local, orientation]

    def traces(self, coeffs, faces: np.ndarray, side: int) -> np.ndarray:
        """Traces at the face quadrature points from one side: (nf, C, nfq)."""
        elements = self.mesh.face_elements[faces, side]
        local = np.reshape(coeffs, self.shape)[elements]
        return np.einsum('fqb,fcb->fcq', self.face_table(faces, side), local)


@dataclass(eq=False)
class DGFunction:
    space: DGSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if self.coeffs.size != self.space.n_dofs:
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got {self.coeffs.size}")

    def local(self) -> np.ndarray:
        return self.coeffs.reshape(self.space.shape)

    def values(self) -> np.ndarray:
        return self.space.values(self.coeffs)

    def gradient_values(self) -> np.ndarray:
        return self.space.gradient_values(self.coeffs)

    def traces(self, faces, side: int) -> np.ndarray:
        return self.space.traces(self.coeffs, faces, side)

    def evaluate(self, element: int, point):
        return evaluate(self, element, point)

    def copy(self) -> 'DGFunction':
        return DGFunction(self.space, self.coeffs.copy())

    def _coefficients_of(self, other) -> np.ndarray:
        if isinstance(other, DGFunction):
            if other.space is not self.space:
                raise ValueError("DG functions live in different spaces")
            return other.coeffs
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return DGFunction(self.space, self.coeffs + self._coefficients_of(other))

    def __sub__(self, other):
        return DGFunction(self.space, self.coeffs - self._coefficients_of(other))

    def __mul__(self, scalar):
        return DGFunction(self.space, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return DGFunction(self.space, -self.coeffs)


def build_space(mesh: Mesh, k: int, components: int = 1) -> DGSpace:
    space = DGSpace(mesh, k, components)
    logger.debug(f"🔧 DG space k={k} components={components}: {space.n_dofs} dofs")
    return space


def zeros(space: DGSpace) -> DGFunction:
    return DGFunction(space, np.zeros(space.n_dofs))


def mass_solve(space: DGSpace, rhs) -> np.ndarray:
    """Apply the block-diagonal inverse mass matrix to a moment vector."""
    n_elements, components, nb = space.shape
    blocks = np.asarray(rhs, dtype=float).reshape(n_elements * components, nb)
    solution = cho_solve(space.mass_factor, blocks.T).T
    return (solution / np.repeat(space.det, components)[:, None]).ravel()


def mass_matrix(space: DGSpace) -> sp.csr_matrix:
    n_elements, components, _ = space.shape
    scale = np.repeat(space.det, components)
    return block_diagonal(scale[:, None, None] * space.reference_mass[None])


def inverse_mass_matrix(space: DGSpace) -> sp.csr_matrix:
    n_elements, components, _ = space.shape
    inverse = cho_solve(space.mass_factor, np.eye(space.local_size))
    scale = 1.0 / np.repeat(space.det, components)
    return block_diagonal(scale[:, None, None] * inverse[None])


def sample(space: DGSpace, field, points: np.ndarray) -> np.ndarray:
    """Evaluate field(x, y) at an array of points (..., 2) and return (Ne, C, n) layout."""
    values = np.asarray(field(points[..., 0], points[..., 1]), dtype=float)
    if space.components == 1:
        return np.broadcast_to(values, points.shape[:-1])[:, None, :]
    values = np.broadcast_to(values, points.shape)
    return np.moveaxis(values, -1, 1)


def l2_project(space: DGSpace, field) -> DGFunction:
    """L2 projection of field(x, y) onto the space (Pi_{V_h}, Pi_{Q_h}, Pi_{Sigma_h})."""
    values = sample(space, field, space.quad_points)
    return DGFunction(space, mass_solve(space, space.moments(values)))


def evaluate(fn: DGFunction, element: int, point):
    """Value of fn inside `element` at a reference point; a scalar or a 2-vector."""
    basis = bernstein_eval(fn.space.degree, np.asarray(point, dtype=float)[None, :])
    value = fn.local()[element] @ basis.values[0]
    return float(value[0]) if fn.space.components == 1 else value
