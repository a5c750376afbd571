"""
Weighted preconditioner on V_h and its SPD solve.

The preconditioner bilinear form frozen at u is

    a_u(v, w) = (W(|D_DG(u; g_D)|) D_DG(v; 0), D_DG(w; 0))
              + sum_faces eta h_e^{-1} <W(|[[u]]| / h_e) [[v]], [[w]]>

with W = (eps + r)^{p-2} for p < 2, 1 for p = 2 and eps + r^{p-2} for p > 2.
At p = 2 it is the Hessian of J_h.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .dgspace import DGFunction, DGSpace, block_diagonal, zeros
from .energy import EnergyContext, abs_pow, coefficients_of, grad_Jh
from .exceptions import LinearSolveError

logger = logging.getLogger(__name__)

SOLVE_RTOL = 1e-12
REFINEMENT_STEPS = 3

SolverMethod = Literal['cg', 'direct']


@dataclass(frozen=True, eq=False)
class PrecondSystem:
    space: DGSpace
    matrix: sp.csr_matrix
    snapshot: str
    eps: float
    p: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def snapshot_id(coeffs) -> str:
    """Identifier of the iterate a system was frozen at."""
    return hashlib.sha1(np.ascontiguousarray(coeffs, dtype=float).tobytes()).hexdigest()


def weight(r, p: float, eps: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if p == 2.0:
        return np.ones_like(r)
    if p < 2.0:
        return abs_pow(eps + r, p - 2.0)
    return eps + abs_pow(r, p - 2.0)


def _check_eps(p: float, eps) -> float:
    if p == 2.0:
        return 0.0 if eps is None else float(eps)
    if eps is None or not eps > 0.0:
        raise ValueError(f"eps must be positive for p != 2, got eps={eps} at p={p}")
    return float(eps)


def _frozen_weights(ctx: EnergyContext, coeffs, eps: float):
    p = ctx.p
    gradient = ctx.vector_space.values(ctx.gradient_coefficients(coeffs))
    volume = weight(np.linalg.norm(gradient, axis=1), p, eps)
    jumps, boundary = ctx.face_differences(coeffs)
    op, heights = ctx.grad_op, ctx.mesh.face_heights
    interior = weight(np.abs(jumps) / heights[op.interior][:, None], p, eps)
    dirichlet = weight(np.abs(boundary) / heights[op.dirichlet][:, None], p, eps)
    return volume, interior, dirichlet


def _face_blocks(space: DGSpace, faces, omega, pairs):
    nb = space.local_size
    mesh = space.mesh
    weights = space.face_weights[faces] * omega
    i = np.arange(nb)[None, :, None]
    j = np.arange(nb)[None, None, :]
    rows, cols, values = [], [], []
    for test, trial, sign in pairs:
        block = sign * np.einsum('fq,fqi,fqj->fij', weights, space.face_table(faces, test), space.face_table(faces, trial))
        r = mesh.face_elements[faces, test][:, None, None] * nb + i
        c = mesh.face_elements[faces, trial][:, None, None] * nb + j
        r, c = np.broadcast_arrays(r, c)
        rows.append(r.ravel())
        cols.append(c.ravel())
        values.append(block.ravel())
    return rows, cols, values


def assemble_precond(ctx: EnergyContext, u, eps=None) -> PrecondSystem:
    p = ctx.p
    eps = _check_eps(p, eps)
    coeffs = coefficients_of(u)
    space, vector_space = ctx.scalar_space, ctx.vector_space
    volume, interior, dirichlet = _frozen_weights(ctx, coeffs, eps)

    # weighted Q_h mass, the same weight on both components
    mass = np.einsum('eq,eq,qi,qj->eij', space.quad_weights, volume, space.basis.values, space.basis.values)
    weighted_mass = block_diagonal(np.repeat(mass, vector_space.components, axis=0))
    matrix = ctx.lifting.T @ weighted_mass @ ctx.lifting

    op = ctx.grad_op
    rows, cols, values = [], [], []
    if len(op.interior):
        omega = ctx.penalty[op.interior][:, None] * interior
        parts = _face_blocks(space, op.interior, omega, ((0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)))
        for bucket, part in zip((rows, cols, values), parts):
            bucket.extend(part)
    if len(op.dirichlet):
        omega = ctx.penalty[op.dirichlet][:, None] * dirichlet
        parts = _face_blocks(space, op.dirichlet, omega, ((0, 0, 1.0),))
        for bucket, part in zip((rows, cols, values), parts):
            bucket.extend(part)
    if rows:
        faces = sp.csr_matrix(
            (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))), shape=matrix.shape
        )
        matrix = matrix + faces

    matrix = (0.5 * (matrix + matrix.T)).tocsr()
    return PrecondSystem(space=space, matrix=matrix, snapshot=snapshot_id(coeffs), eps=eps, p=p)


def _block_jacobi(matrix: sp.csr_matrix, block: int) -> LinearOperator:
    n = matrix.shape[0]
    coo = matrix.tocoo()
    on_diagonal = coo.row // block == coo.col // block
    blocks = np.zeros((n // block, block, block))
    np.add.at(
        blocks,
        (coo.row[on_diagonal] // block, coo.row[on_diagonal] % block, coo.col[on_diagonal] % block),
        coo.data[on_diagonal],
    )
    inverse = np.linalg.inv(blocks)

    def apply(x):
        return np.einsum('eij,ej->ei', inverse, np.reshape(x, (-1, block))).ravel()

    return LinearOperator((n, n), matvec=apply, dtype=float)


def _relative_residual(matrix, x, rhs, rhs_norm) -> float:
    return float(np.linalg.norm(matrix @ x - rhs) / rhs_norm)


def solve_spd(system: PrecondSystem, rhs, method: SolverMethod = 'cg') -> DGFunction:
    """
    Solve system.matrix x = rhs to relative residual SOLVE_RTOL.

    A CG run that misses the tolerance falls back to a SuperLU factor plus
    up to REFINEMENT_STEPS rounds of iterative refinement.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (system.size,):
        raise ValueError(f"right-hand side has shape {rhs.shape}, expected ({system.size},)")
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return zeros(system.space)

    matrix = system.matrix
    if method == 'cg':
        x, info = cg(
            matrix, rhs, rtol=SOLVE_RTOL, atol=0.0, maxiter=20 * system.size,
            M=_block_jacobi(matrix, system.space.local_size),
        )
        residual = _relative_residual(matrix, x, rhs, rhs_norm)
        if residual <= SOLVE_RTOL:
            return DGFunction(system.space, x)
        logger.debug(f"⚠️ CG stopped at relative residual {residual:.3e} (info={info}), using SuperLU")
    elif method != 'direct':
        raise ValueError(f"unknown linear solver method: {method}")

    try:
        factor = splu(matrix.tocsc())
        x = factor.solve(rhs)
    except RuntimeError as e:
        logger.error(f"❌ Sparse factorization failed: {e}")
        raise LinearSolveError(f"sparse factorization failed: {e}") from e
    residual = _relative_residual(matrix, x, rhs, rhs_norm)
    for _ in range(REFINEMENT_STEPS):
        if residual <= SOLVE_RTOL:
            break
        x = x + factor.solve(rhs - matrix @ x)
        residual = _relative_residual(matrix, x, rhs, rhs_norm)
    if not residual <= SOLVE_RTOL:
        logger.error(f"❌ Linear solve stalled at relative residual {residual:.3e}")
        raise LinearSolveError(f"linear solve reached relative residual {residual:.3e} only")
    return DGFunction(system.space, x)


def poisson_initial_guess(ctx: EnergyContext, method: SolverMethod = 'cg') -> DGFunction:
    """Linear LDG solution with the same eta and C12: minimizer of J_h at p = 2."""
    poisson = ctx.with_exponent(2.0)
    start = zeros(poisson.scalar_space)
    system = assemble_precond(poisson, start)
    guess = solve_spd(system, -grad_Jh(poisson, start), method)
    logger.info(f"✅ Poisson initial guess computed ({system.size} dofs)")
    return guess


def descent_norm_squared(ctx: EnergyContext, u, v, eps=None) -> float:
    """a_u(v, v) evaluated directly by quadrature."""
    eps = _check_eps(ctx.p, eps)
    volume, interior, dirichlet = _frozen_weights(ctx, coefficients_of(u), eps)
    v = coefficients_of(v)
    gradient = ctx.vector_space.values(ctx.gradient_coefficients(v, with_data=False))
    total = float(np.sum(ctx.scalar_space.quad_weights * volume * np.sum(gradient ** 2, axis=1)))

    jumps, boundary = ctx.face_differences(v, with_data=False)
    op, space = ctx.grad_op, ctx.scalar_space
    for faces, w, difference in ((op.interior, interior, jumps), (op.dirichlet, dirichlet, boundary)):
        total += float(np.sum(space.face_weights[faces] * ctx.penalty[faces][:, None] * w * difference ** 2))
    return total
