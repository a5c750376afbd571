"""
Trace algebra and the DG discrete weak gradient D_DG(v; g).

For v in V_h and zeta in Q_h,

    (D_DG(v; g), zeta) = (grad_h v, zeta)
                         - <[[v]], {zeta} - C12 [[zeta]]>_interior
                         - <v - g, zeta . n>_dirichlet

The v part is assembled once into a sparse matrix B (vector moments by
scalar coefficients) and the g part into a moment vector b_g, so that
D_DG(v; g) = M^{-1} (B v + b_g).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np
import scipy.sparse as sp

from .dgspace import DGFunction, DGSpace, mass_solve
from .mesh import FaceKind, Mesh

logger = logging.getLogger(__name__)

DEFAULT_ETA = 10.0
DEFAULT_V0 = (1.0, 0.0)


@dataclass(frozen=True, eq=False)
class FluxParams:
    """Penalty eta and C12 per face; C12 is zero on boundary faces."""
    eta: np.ndarray
    c12: np.ndarray

    @property
    def n_faces(self) -> int:
        return len(self.eta)


def mdldg_c12(mesh: Mesh, face: int, v0=DEFAULT_V0, flip: bool = False) -> np.ndarray:
    """C12 = s n1 / 2 with s = sign(v0 . n1), ties resolved to s = +1."""
    if mesh.face_kind[face] != FaceKind.INTERIOR:
        raise ValueError(f"C12 is only defined on interior faces, face {face} is on the boundary")
    n1 = mesh.normals[face]
    s = -1.0 if float(np.dot(v0, n1)) < 0.0 else 1.0
    if flip:
        s = -s
    return 0.5 * s * n1


def build_flux_params(mesh: Mesh, eta: float = DEFAULT_ETA, v0=DEFAULT_V0, flip: bool = False) -> FluxParams:
    if not eta > 0.0:
        raise ValueError(f"penalty eta must be positive, got {eta}")
    c12 = np.zeros((mesh.n_faces, 2))
    interior = mesh.faces_of_kind(FaceKind.INTERIOR)
    # vectorized form of mdldg_c12
    s = np.where(mesh.normals[interior] @ np.asarray(v0, dtype=float) < 0.0, -1.0, 1.0)
    if flip:
        s = -s
    c12[interior] = 0.5 * s[:, None] * mesh.normals[interior]
    eta_per_face = np.full(mesh.n_faces, float(eta))
    for array in (eta_per_face, c12):
        array.setflags(write=False)
    return FluxParams(eta=eta_per_face, c12=c12)


def scalar_jump(left, right, normal):
    """[[q]] = q1 n1 + q2 n2; a vector. `right=None` gives the boundary form q n."""
    left = np.asarray(left, dtype=float)
    difference = left if right is None else left - np.asarray(right, dtype=float)
    return difference[..., None] * normal


def vector_jump(left, right, normal):
    """[[phi]] = phi1 . n1 + phi2 . n2; a scalar. Undefined on the boundary."""
    if right is None:
        raise ValueError("the jump of a vector field is undefined on a boundary face")
    return np.sum((np.asarray(left, dtype=float) - np.asarray(right, dtype=float)) * normal, axis=-1)


def average(left, right, vector: bool):
    """{.}; on the boundary only the vector average exists and equals the inner trace."""
    left = np.asarray(left, dtype=float)
    if right is None:
        if not vector:
            raise ValueError("the average of a scalar field is undefined on a boundary face")
        return left
    return 0.5 * (left + np.asarray(right, dtype=float))


def jump_avg(mesh: Mesh, face: int, left, right=None, vector: bool = False,
             part: Literal['both', 'jump', 'average'] = 'both'):
    """
    Jump and average of one face's traces, or just one of them with `part`.

    Boundary faces use the one-sided forms. The members undefined there
    (the vector jump and the scalar average) raise ValueError when requested,
    so a boundary face always needs `part`.
    """
    normal = mesh.normals[face]
    if mesh.face_kind[face] != FaceKind.INTERIOR:
        right = None
    elif right is None:
        raise ValueError(f"interior face {face} needs traces from both sides")
    members = {
        'jump': lambda: vector_jump(left, right, normal) if vector else scalar_jump(left, right, normal),
        'average': lambda: average(left, right, vector),
    }
    if part == 'both':
        return members['jump'](), members['average']()
    if part not in members:
        raise ValueError(f"unknown face quantity: {part}")
    return members[part]()


@dataclass(frozen=True, eq=False)
class GradOperator:
    scalar_space: DGSpace
    vector_space: DGSpace
    flux: FluxParams
    matrix: sp.csr_matrix
    interior: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray

    def apply(self, v, g_moments=None) -> DGFunction:
        return apply_ddg(self, v, g_moments)


def _block_coo(space: DGSpace, test_elements, trial_elements, blocks):
    """COO triplets of (n, 2, nb, nb) blocks coupling vector test rows to scalar trial columns."""
    nb = space.local_size
    component = np.arange(2)[None, :, None, None]
    i = np.arange(nb)[None, None, :, None]
    j = np.arange(nb)[None, None, None, :]
    rows = (test_elements[:, None, None, None] * 2 + component) * nb + i
    cols = trial_elements[:, None, None, None] * nb + j
    rows, cols = np.broadcast_arrays(rows, cols)
    return rows.ravel(), cols.ravel(), blocks.ravel()


def _face_coupling(space: DGSpace, faces, test_side: int, trial_side: int, coefficient):
    """Blocks coefficient * sum_q w T_test T_trial n_c for every face in `faces`."""
    weights = space.face_weights[faces]
    test = space.face_table(faces, test_side)
    trial = space.face_table(faces, trial_side)
    pairing = np.einsum('fq,fqi,fqj->fij', weights, test, trial)
    normals = space.mesh.normals[faces]
    blocks = coefficient[:, None, None, None] * pairing[:, None] * normals[:, :, None, None]
    mesh = space.mesh
    return _block_coo(space, mesh.face_elements[faces, test_side], mesh.face_elements[faces, trial_side], blocks)


def assemble_grad(scalar_space: DGSpace, vector_space: DGSpace, flux: FluxParams) -> GradOperator:
    if not scalar_space.compatible(vector_space):
        raise ValueError("D_DG needs scalar and vector spaces on the same mesh with the same degree")
    if scalar_space.components != 1 or vector_space.components != 2:
        raise ValueError("D_DG maps a scalar space into a 2-component vector space")
    mesh = scalar_space.mesh
    if flux.n_faces != mesh.n_faces:
        raise ValueError(f"flux parameters cover {flux.n_faces} faces, the mesh has {mesh.n_faces}")

    space = scalar_space
    basis = space.basis
    # sum_q w_q psi_i(q) dphi_j/dxi_d(q) on the reference element
    reference = np.einsum('q,qi,qjd->ijd', space.volume_rule.weights, basis.values, basis.gradients)
    volume = np.einsum('e,edc,ijd->ecij', space.det, space.inverse_jacobians, reference)
    elements = np.arange(mesh.n_elements)
    triplets = [_block_coo(space, elements, elements, volume)]

    interior = mesh.faces_of_kind(FaceKind.INTERIOR)
    if len(interior):
        beta = np.einsum('fc,fc->f', flux.c12[interior], mesh.normals[interior])
        left_weight = 0.5 - beta
        right_weight = 0.5 + beta
        triplets += [
            _face_coupling(space, interior, 0, 0, -left_weight),
            _face_coupling(space, interior, 0, 1, left_weight),
            _face_coupling(space, interior, 1, 0, -right_weight),
            _face_coupling(space, interior, 1, 1, right_weight),
        ]

    dirichlet = mesh.faces_of_kind(FaceKind.DIRICHLET)
    if len(dirichlet):
        triplets.append(_face_coupling(space, dirichlet, 0, 0, -np.ones(len(dirichlet))))

    rows, cols, values = (np.concatenate(parts) for parts in zip(*triplets))
    matrix = sp.csr_matrix((values, (rows, cols)), shape=(vector_space.n_dofs, scalar_space.n_dofs))
    matrix.sum_duplicates()
    logger.debug(f"🔧 D_DG assembled: {matrix.shape[0]}x{matrix.shape[1]}, nnz={matrix.nnz}")

    return GradOperator(
        scalar_space=scalar_space, vector_space=vector_space, flux=flux, matrix=matrix,
        interior=interior, dirichlet=dirichlet, neumann=mesh.faces_of_kind(FaceKind.NEUMANN),
    )


def dirichlet_moments(vector_space: DGSpace, g: Optional[Callable]) -> np.ndarray:
    """b_g with entries <g, zeta . n> over the Dirichlet faces."""
    moments = np.zeros(vector_space.shape)
    mesh = vector_space.mesh
    faces = mesh.faces_of_kind(FaceKind.DIRICHLET)
    if g is None or len(faces) == 0:
        return moments.ravel()
    points = vector_space.face_points[faces]
    values = np.broadcast_to(np.asarray(g(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1])
    table = vector_space.face_table(faces, 0)
    local = np.einsum('fq,fq,fqi,fc->fci', vector_space.face_weights[faces], values, table, mesh.normals[faces])
    np.add.at(moments, mesh.face_elements[faces, 0], local)
    return moments.ravel()


def apply_ddg(op: GradOperator, v, g_moments=None) -> DGFunction:
    """D_DG(v; g) = M^{-1} (B v + b_g)."""
    coeffs = v.coeffs if isinstance(v, DGFunction) else np.asarray(v, dtype=float)
    moments = op.matrix @ coeffs
    if g_moments is not None:
        moments = moments + g_moments
    return DGFunction(op.vector_space, mass_solve(op.vector_space, moments))


def _traces(space: DGSpace, coeffs, faces, side: int) -> np.ndarray:
    traces = space.traces(coeffs, faces, side)
    return traces[:, 0] if space.components == 1 else np.moveaxis(traces, 1, -1)


def _boundary_values(space: DGSpace, g, faces) -> np.ndarray:
    points = space.face_points[faces]
    if g is None:
        return np.zeros(points.shape[:-1])
    return np.broadcast_to(np.asarray(g(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1])


def primal_pairing(op: GradOperator, v: DGFunction, zeta: DGFunction, g=None) -> float:
    """(D_DG(v; g), zeta) from the defining formula, evaluated by quadrature."""
    scalar, vector = op.scalar_space, op.vector_space
    grad_v = scalar.gradient_values(v.coeffs)[:, 0]
    zeta_values = np.moveaxis(vector.values(zeta.coeffs), 1, -1)
    total = np.einsum('eq,eqc,eqc->', scalar.quad_weights, grad_v, zeta_values)

    faces = op.interior
    if len(faces):
        normal = scalar.mesh.normals[faces][:, None, :]
        v_jump = scalar_jump(_traces(scalar, v.coeffs, faces, 0), _traces(scalar, v.coeffs, faces, 1), normal)
        zeta_left, zeta_right = _traces(vector, zeta.coeffs, faces, 0), _traces(vector, zeta.coeffs, faces, 1)
        shifted = average(zeta_left, zeta_right, True) - op.flux.c12[faces][:, None, :] * vector_jump(
            zeta_left, zeta_right, normal)[..., None]
        total -= np.einsum('fq,fqc,fqc->', scalar.face_weights[faces], v_jump, shifted)

    faces = op.dirichlet
    if len(faces):
        normal = scalar.mesh.normals[faces][:, None, :]
        mismatch = _traces(scalar, v.coeffs, faces, 0) - _boundary_values(scalar, g, faces)
        flux = np.sum(_traces(vector, zeta.coeffs, faces, 0) * normal, axis=-1)
        total -= np.einsum('fq,fq,fq->', scalar.face_weights[faces], mismatch, flux)
    return float(total)


def dual_pairing(op: GradOperator, v: DGFunction, zeta: DGFunction, g=None) -> float:
    """
    (D_DG(v; g), zeta) after elementwise integration by parts:

        -(v, div_h zeta) + <{v} + C12 . [[v]], [[zeta]]>_interior
        + <g, zeta . n>_dirichlet + <v, zeta . n>_neumann
    """
    scalar, vector = op.scalar_space, op.vector_space
    grad_zeta = vector.gradient_values(zeta.coeffs)
    divergence = grad_zeta[:, 0, :, 0] + grad_zeta[:, 1, :, 1]
    total = -np.einsum('eq,eq,eq->', scalar.quad_weights, scalar.values(v.coeffs)[:, 0], divergence)

    faces = op.interior
    if len(faces):
        normal = scalar.mesh.normals[faces][:, None, :]
        v_left, v_right = _traces(scalar, v.coeffs, faces, 0), _traces(scalar, v.coeffs, faces, 1)
        v_hat = average(v_left, v_right, False) + np.sum(
            op.flux.c12[faces][:, None, :] * scalar_jump(v_left, v_right, normal), axis=-1)
        zeta_jump = vector_jump(_traces(vector, zeta.coeffs, faces, 0), _traces(vector, zeta.coeffs, faces, 1), normal)
        total += np.einsum('fq,fq,fq->', scalar.face_weights[faces], v_hat, zeta_jump)

    for faces, values in ((op.dirichlet, lambda f: _boundary_values(scalar, g, f)),
                          (op.neumann, lambda f: _traces(scalar, v.coeffs, f, 0))):
        if len(faces):
            normal = scalar.mesh.normals[faces][:, None, :]
            flux = np.sum(_traces(vector, zeta.coeffs, faces, 0) * normal, axis=-1)
            total += np.einsum('fq,fq,fq->', scalar.face_weights[faces], values(faces), flux)
    return float(total)
