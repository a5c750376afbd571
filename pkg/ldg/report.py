"""
Gradient-variable recovery, error norms and convergence tables.
"""
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .dgspace import DGFunction, mass_solve, sample
from .energy import EnergyContext, a_op, abs_pow

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    'level', 'Ne', 'Ndof', 'err_u', 'ord_u', 'err_q', 'ord_q', 'err_sigma', 'ord_sigma', 'iters', 'seconds',
]
HISTORY_COLUMNS = ['iter', 'J', 'wnorm', 'rho', 'evals']
FLOAT_FORMAT = '%.9e'
MISSING = '-'


class LevelResult(BaseModel):
    level: int = Field(..., ge=0)
    n_elements: int = Field(..., ge=1)
    n_dofs: int = Field(..., ge=1)
    err_u: float
    err_q: float
    err_sigma: float
    ord_u: Optional[float] = None
    ord_q: Optional[float] = None
    ord_sigma: Optional[float] = None
    iters: int = 0
    seconds: float = 0.0

    def to_row(self) -> dict:
        return {
            'level': self.level, 'Ne': self.n_elements, 'Ndof': self.n_dofs,
            'err_u': self.err_u, 'ord_u': self.ord_u,
            'err_q': self.err_q, 'ord_q': self.ord_q,
            'err_sigma': self.err_sigma, 'ord_sigma': self.ord_sigma,
            'iters': self.iters, 'seconds': self.seconds,
        }


def recover_gradients(ctx: EnergyContext, u_h):
    """q_h = D_DG(u_h; g_D) and sigma_h = projection of A(q_h) onto Sigma_h."""
    coeffs = u_h.coeffs if isinstance(u_h, DGFunction) else np.asarray(u_h, dtype=float)
    space = ctx.vector_space
    q_h = DGFunction(space, ctx.gradient_coefficients(coeffs))
    stress = np.moveaxis(a_op(np.moveaxis(q_h.values(), 1, -1), ctx.p), -1, 1)
    sigma_h = DGFunction(space, mass_solve(space, space.moments(stress)))
    return q_h, sigma_h


def lp_norm(ctx: EnergyContext, values: np.ndarray, p: float) -> float:
    """L^p norm of (Ne, C, nq) quadrature-point values, Euclidean over components."""
    magnitude = np.linalg.norm(values, axis=1)
    integral = float(np.sum(ctx.scalar_space.quad_weights * abs_pow(magnitude, p)))
    return float(abs_pow(integral, 1.0 / p))


def error_norms(ctx: EnergyContext, u_h, q_h, sigma_h, problem):
    """(||u - u_h||_{L^p}, ||q - q_h||_{L^p}, ||sigma - sigma_h||_{L^p'})."""
    p = ctx.p
    scalar, vector = ctx.scalar_space, ctx.vector_space
    points = scalar.quad_points
    err_u = lp_norm(ctx, sample(scalar, problem.u, points) - u_h.values(), p)
    err_q = lp_norm(ctx, sample(vector, problem.q, points) - q_h.values(), p)
    err_sigma = lp_norm(ctx, sample(vector, problem.stress, points) - sigma_h.values(), ctx.exponent.conjugate)
    return err_u, err_q, err_sigma


def _order(coarse: float, fine: float) -> Optional[float]:
    if not (coarse > 0.0 and fine > 0.0):
        return None
    return math.log2(coarse / fine)


def convergence_orders(results: Iterable[LevelResult]) -> List[LevelResult]:
    """log2 ratios of consecutive errors; None at the first level or for non-positive errors."""
    results = list(results)
    if not results:
        return []
    updated = [results[0].model_copy(update={'ord_u': None, 'ord_q': None, 'ord_sigma': None})]
    for previous, current in zip(results, results[1:]):
        updated.append(current.model_copy(update={
            'ord_u': _order(previous.err_u, current.err_u),
            'ord_q': _order(previous.err_q, current.err_q),
            'ord_sigma': _order(previous.err_sigma, current.err_sigma),
        }))
    return updated


def table_frame(results: Iterable[LevelResult]) -> pd.DataFrame:
    frame = pd.DataFrame([result.to_row() for result in results], columns=TABLE_COLUMNS)
    for column in ('ord_u', 'ord_q', 'ord_sigma', 'seconds'):
        frame[column] = frame[column].astype(float)
    return frame


def write_table(results: Iterable[LevelResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table_frame(results).to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING)
    logger.info(f"💾 Convergence table written to {path}")
    return path


def history_frame(history) -> pd.DataFrame:
    rows = [
        {'iter': record.iteration, 'J': record.energy, 'wnorm': record.wnorm,
         'rho': record.rho, 'evals': record.evaluations}
        for record in history
    ]
    frame = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    for column in ('J', 'wnorm', 'rho'):
        frame[column] = frame[column].astype(float)
    return frame


def write_history(history, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history_frame(history).to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING)
    logger.debug(f"💾 Iteration history written to {path}")
    return path
