"""
The A-operator, the discrete energy J_h, its Gateaux derivative and the
mesh-dependent norms ||.||_{J,p} and E_h.

    J_h(u) = 1/p ||D_DG(u; g_D)||^p
           + 1/p sum_interior eta h_e^{1-p} ||[[u]]||^p
           + 1/p sum_dirichlet eta h_e^{1-p} ||u - g_D||^p
           - (f, u) - <g_N . n, u>_neumann
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .dgspace import DGFunction, DGSpace, build_space, inverse_mass_matrix, sample
from .exceptions import NonFiniteEnergyError
from .ldg_ops import DEFAULT_ETA, DEFAULT_V0, GradOperator, assemble_grad, build_flux_params, dirichlet_moments
from .mesh import Mesh

logger = logging.getLogger(__name__)

# below this magnitude |tau|^e is taken as 0
TINY = 1e-300


class PExponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = Field(..., gt=1.0, description="Exponent of the p-Laplacian, in (1, inf)")

    @field_validator('p')
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError('p must be finite')
        return v

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)


def abs_pow(r, exponent: float):
    """r**exponent for r >= 0 via exp(exponent log r), with 0 for r below TINY."""
    r = np.asarray(r, dtype=float)
    small = r < TINY
    with np.errstate(over='ignore'):
        powered = np.exp(exponent * np.log(np.where(small, 1.0, r)))
    return np.where(small, 0.0, powered)


def a_op(tau, p: float) -> np.ndarray:
    """A(tau) = |tau|^{p-2} tau on the last axis, with A(0) = 0."""
    tau = np.asarray(tau, dtype=float)
    return abs_pow(np.linalg.norm(tau, axis=-1), p - 2.0)[..., None] * tau


def a_inverse(tau, p: float) -> np.ndarray:
    return a_op(tau, p / (p - 1.0))


@dataclass(frozen=True, eq=False)
class EnergyContext:
    """Everything J_h needs on one mesh at one degree; immutable once built."""
    scalar_space: DGSpace
    vector_space: DGSpace
    grad_op: GradOperator
    exponent: PExponent
    lifting: sp.csr_matrix
    data_lift: np.ndarray
    dirichlet_values: np.ndarray
    load: np.ndarray
    penalty: np.ndarray

    @classmethod
    def build(cls, mesh: Mesh, k: int, p: float, source: Optional[Callable] = None,
              dirichlet: Optional[Callable] = None, neumann: Optional[Callable] = None,
              eta: float = DEFAULT_ETA, v0=DEFAULT_V0, flip: bool = False) -> 'EnergyContext':
        """
        Assemble the context.

        `source` and `dirichlet` are callables f(x, y); `neumann` is
        g(x, y, n) returning g_N . n for unit normals n. Missing data is zero.
        """
        scalar_space = build_space(mesh, k, 1)
        vector_space = build_space(mesh, k, 2)
        flux = build_flux_params(mesh, eta, v0, flip)
        grad_op = assemble_grad(scalar_space, vector_space, flux)

        inverse_mass = inverse_mass_matrix(vector_space)
        lifting = (inverse_mass @ grad_op.matrix).tocsr()
        data_lift = inverse_mass @ dirichlet_moments(vector_space, dirichlet)

        faces = grad_op.dirichlet
        points = scalar_space.face_points[faces]
        if dirichlet is None:
            dirichlet_values = np.zeros(points.shape[:-1])
        else:
            dirichlet_values = np.broadcast_to(
                np.asarray(dirichlet(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1]
            ).copy()

        load = np.zeros(scalar_space.n_dofs)
        if source is not None:
            load += scalar_space.moments(sample(scalar_space, source, scalar_space.quad_points))
        if neumann is not None and len(grad_op.neumann):
            load += _neumann_load(scalar_space, grad_op.neumann, neumann)

        for array in (data_lift, dirichlet_values, load):
            array.setflags(write=False)
        penalty = flux.eta / mesh.face_heights
        penalty.setflags(write=False)

        logger.info(
            f"🔧 Energy context: Ne={mesh.n_elements}, k={k}, p={p}, "
            f"Ndof={scalar_space.n_dofs}, eta={eta}"
        )
        return cls(
            scalar_space=scalar_space, vector_space=vector_space, grad_op=grad_op,
            exponent=PExponent(p=p), lifting=lifting, data_lift=data_lift,
            dirichlet_values=dirichlet_values, load=load, penalty=penalty,
        )

    @classmethod
    def for_problem(cls, problem, mesh: Mesh, k: int, eta: float = DEFAULT_ETA, flip: bool = False):
        return cls.build(
            mesh, k, problem.exponent.p, source=problem.f, dirichlet=problem.g_dirichlet,
            neumann=problem.neumann_data if problem.has_neumann else None, eta=eta, flip=flip,
        )

    @property
    def p(self) -> float:
        return self.exponent.p

    @property
    def mesh(self) -> Mesh:
        return self.scalar_space.mesh

    @property
    def eta(self) -> np.ndarray:
        return self.grad_op.flux.eta

    def with_exponent(self, p: float) -> 'EnergyContext':
        return replace(self, exponent=PExponent(p=p))

    def gradient_coefficients(self, coeffs, with_data: bool = True) -> np.ndarray:
        """Coefficients of D_DG(u; g_D), or D_DG(u; 0) without data."""
        lifted = self.lifting @ np.asarray(coeffs, dtype=float)
        return lifted + self.data_lift if with_data else lifted

    def face_differences(self, coeffs, with_data: bool = True):
        """
        Per-face scalar differences at face quadrature points.

        Interior faces give u1 - u2, Dirichlet faces u - g_D (or u without data).
        """
        space, op = self.scalar_space, self.grad_op
        interior = op.interior
        jumps = space.traces(coeffs, interior, 0)[:, 0] - space.traces(coeffs, interior, 1)[:, 0]
        boundary = space.traces(coeffs, op.dirichlet, 0)[:, 0]
        if with_data:
            boundary = boundary - self.dirichlet_values
        return jumps, boundary


def _neumann_load(space: DGSpace, faces, neumann: Callable) -> np.ndarray:
    mesh = space.mesh
    points = space.face_points[faces]
    normals = np.broadcast_to(mesh.normals[faces][:, None, :], points.shape)
    values = np.broadcast_to(
        np.asarray(neumann(points[..., 0], points[..., 1], normals), dtype=float), points.shape[:-1]
    )
    local = np.einsum('fq,fq,fqi->fi', space.face_weights[faces], values, space.face_table(faces, 0))
    load = np.zeros((mesh.n_elements, space.local_size))
    np.add.at(load, mesh.face_elements[faces, 0], local)
    return load.ravel()


def coefficients_of(u) -> np.ndarray:
    return u.coeffs if isinstance(u, DGFunction) else np.asarray(u, dtype=float)


def _power_sums(ctx: EnergyContext, coeffs, p: float, with_data: bool):
    """(||D||^p, interior penalty sum, Dirichlet penalty sum), each unscaled by 1/p."""
    gradient = ctx.vector_space.values(ctx.gradient_coefficients(coeffs, with_data))
    magnitude = np.linalg.norm(gradient, axis=1)
    volume = float(np.sum(ctx.scalar_space.quad_weights * abs_pow(magnitude, p)))

    jumps, boundary = ctx.face_differences(coeffs, with_data)
    space, op = ctx.scalar_space, ctx.grad_op
    sums = []
    for faces, difference in ((op.interior, jumps), (op.dirichlet, boundary)):
        h = ctx.mesh.face_heights[faces]
        weight = ctx.eta[faces] * abs_pow(h, 1.0 - p)
        sums.append(float(np.sum(space.face_weights[faces] * weight[:, None] * abs_pow(np.abs(difference), p))))
    return volume, sums[0], sums[1]


def _check_finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NonFiniteEnergyError(f"{what} is not finite")
    return value


def energy_Jh(ctx: EnergyContext, u) -> float:
    coeffs = coefficients_of(u)
    p = ctx.p
    volume, interior, dirichlet = _power_sums(ctx, coeffs, p, with_data=True)
    value = (volume + interior + dirichlet) / p - float(ctx.load @ coeffs)
    return float(_check_finite(value, "J_h"))


def energy_scale(ctx: EnergyContext, u) -> float:
    """Convex part of J_h plus the magnitude of its linear part."""
    coeffs = coefficients_of(u)
    volume, interior, dirichlet = _power_sums(ctx, coeffs, ctx.p, with_data=True)
    return float((volume + interior + dirichlet) / ctx.p + abs(float(ctx.load @ coeffs)))


def grad_Jh(ctx: EnergyContext, u) -> np.ndarray:
    """r_i = J_h'(u)(phi_i) for every scalar basis function phi_i."""
    coeffs = coefficients_of(u)
    p = ctx.p
    space = ctx.scalar_space

    gradient = ctx.vector_space.values(ctx.gradient_coefficients(coeffs))
    magnitude = np.linalg.norm(gradient, axis=1)
    stress = abs_pow(magnitude, p - 2.0)[:, None, :] * gradient
    residual = ctx.lifting.T @ ctx.vector_space.moments(stress)

    jumps, boundary = ctx.face_differences(coeffs)
    local = np.zeros((ctx.mesh.n_elements, space.local_size))
    op = ctx.grad_op
    for faces, difference, sides in ((op.interior, jumps, (0, 1)), (op.dirichlet, boundary, (0,))):
        if len(faces) == 0:
            continue
        h = ctx.mesh.face_heights[faces][:, None]
        scaled = difference / h
        flux = ctx.eta[faces][:, None] * abs_pow(np.abs(scaled), p - 2.0) * scaled
        weighted = space.face_weights[faces] * flux
        for side, sign in zip(sides, (1.0, -1.0)):
            contribution = np.einsum('fq,fqi->fi', weighted, space.face_table(faces, side))
            np.add.at(local, ctx.mesh.face_elements[faces, side], sign * contribution)

    residual = residual + local.ravel() - ctx.load
    return _check_finite(residual, "J_h' residual")


def jnorm(ctx: EnergyContext, v, p: Optional[float] = None) -> float:
    """(||D_DG(v; 0)||^p + ||[[v]]||^p over interior and Dirichlet faces)^{1/p}."""
    p = ctx.p if p is None else p
    volume, interior, dirichlet = _power_sums(ctx, coefficients_of(v), p, with_data=False)
    return float(abs_pow(volume + interior + dirichlet, 1.0 / p))


def energy_Eh(ctx: EnergyContext, u) -> float:
    p = ctx.p
    volume, interior, dirichlet = _power_sums(ctx, coefficients_of(u), p, with_data=True)
    return float(_check_finite(abs_pow(volume + interior + dirichlet, 1.0 / p), "E_h"))
