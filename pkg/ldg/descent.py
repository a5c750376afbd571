"""
Preconditioned steepest descent on J_h with a one-sided golden-section
line search.
"""
import logging
import math
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .dgspace import DGFunction
from .energy import EnergyContext, coefficients_of, energy_Jh, energy_scale, grad_Jh
from .exceptions import NonFiniteEnergyError, SolverError
from .linsolve import SolverMethod, assemble_precond, poisson_initial_guess, solve_spd

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_LINE_SEARCH_EVALUATIONS = 200


class SolverConfig(BaseModel):
    """Algorithm inputs: eps, delta_w, delta_rho and N_it, plus the line-search delta."""

    eps: float = Field(1e-14, ge=0.0, description="Weight stabilization; must be positive unless p = 2")
    delta_w: float = Field(1e-16, gt=0.0, description="Stop once the descent norm ||w|| falls below this")
    delta_rho: float = Field(1e-16, gt=0.0, description="Stop once the accepted step falls below this")
    max_iters: int = Field(500, ge=1, description="N_it, the iteration budget")
    line_search_delta: float = Field(1e-16, gt=0.0, description="Bracket width of the golden-section search")
    energy_rtol: float = Field(1e-14, ge=0.0, description="Energy decreases below energy_rtol * scale count as zero")
    linear_solver: SolverMethod = 'cg'

    @field_validator('eps', 'delta_w', 'delta_rho', 'line_search_delta', 'energy_rtol')
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError('tolerances must be finite')
        return v


class IterationRecord(BaseModel):
    iteration: int
    energy: float
    wnorm: Optional[float] = None
    rho: Optional[float] = None
    evaluations: int = 0


class LineSearchResult(NamedTuple):
    x: float
    y: float
    evaluations: int


class DescentResult(NamedTuple):
    solution: DGFunction
    history: List[IterationRecord]
    stop_reason: str
    passes: int
    accepted_steps: int
    stationarity: float


def golden_section(f: Callable[[float], float], guess: float, delta: float,
                   max_evaluations: int = MAX_LINE_SEARCH_EVALUATIONS) -> LineSearchResult:
    """
    Minimize a convex f on [0, inf) starting from a step guess.

    The guess is shrunk toward 0 while f(guess) >= f(0), or expanded by
    1/GOLDEN while f keeps decreasing, and the bracket is then refined by
    classical golden-section steps until it is narrower than delta. The
    best point over every evaluation is returned.
    """
    if not delta > 0.0:
        raise ValueError(f"line-search delta must be positive, got {delta}")
    evaluations = []

    def sample(x):
        y = float(f(x))
        if math.isnan(y):
            y = math.inf
        evaluations.append((x, y))
        return y

    def best():
        x, y = min(evaluations, key=lambda point: point[1])
        return LineSearchResult(x, y, len(evaluations))

    x1, y1 = 0.0, sample(0.0)
    x4 = max(float(guess), delta)
    y4 = sample(x4)

    if y4 >= y1:
        x2 = (1.0 - GOLDEN) * x4
        y2 = sample(x2)
        while y2 >= y1:
            if x4 <= delta or len(evaluations) >= max_evaluations:
                return best()
            x4, y4 = x2, y2
            x2 = (1.0 - GOLDEN) * x4
            y2 = sample(x2)
        x3 = x1 + GOLDEN * (x4 - x1)
        y3 = sample(x3)
    else:
        x3, y3 = x4, y4
        x4 = x3 / GOLDEN
        y4 = sample(x4)
        while y4 < y3:
            if len(evaluations) >= max_evaluations:
                return best()
            x3, y3 = x4, y4
            x4 = x3 / GOLDEN
            y4 = sample(x4)
        x2 = x1 + (1.0 - GOLDEN) * (x4 - x1)
        y2 = sample(x2)

    while x4 - x1 > max(delta, 8.0 * np.spacing(x4)) and len(evaluations) < max_evaluations:
        if y2 < y3:
            x4, y4 = x3, y3
            x3, y3 = x2, y2
            x2 = x1 + (1.0 - GOLDEN) * (x4 - x1)
            y2 = sample(x2)
        else:
            x1, y1 = x2, y2
            x2, y2 = x3, y3
            x3 = x1 + GOLDEN * (x4 - x1)
            y3 = sample(x3)
    return best()


def _line_energy(ctx: EnergyContext, coeffs, direction):
    def phi(t):
        try:
            return energy_Jh(ctx, coeffs - t * direction)
        except NonFiniteEnergyError:
            return math.inf
    return phi


def steepest_descent(ctx: EnergyContext, cfg: SolverConfig, u0=None) -> DescentResult:
    """
    Minimize J_h by u <- u - rho w, where a_u(w, v) = J_h'(u)(v).

    Each pass rebuilds the preconditioner at the current iterate. The loop
    stops when ||w|| < delta_w, when the step found is below delta_rho or
    does not lower J_h by more than roundoff, or after max_iters passes.
    """
    if u0 is None:
        u0 = poisson_initial_guess(ctx, cfg.linear_solver)
    coeffs = coefficients_of(u0).copy()
    energy = energy_Jh(ctx, coeffs)
    history = [IterationRecord(iteration=0, energy=energy)]
    logger.info(f"🚀 Descent started: p={ctx.p}, Ndof={len(coeffs)}, J0={energy:.12e}")

    rho = 1.0
    accepted = 0
    stop_reason = 'max_iters'
    passes = 0
    for passes in range(1, cfg.max_iters + 1):
        residual = grad_Jh(ctx, coeffs)
        system = assemble_precond(ctx, coeffs, cfg.eps)
        direction = solve_spd(system, residual, cfg.linear_solver).coeffs
        norm_squared = float(residual @ direction)
        if not math.isfinite(norm_squared):
            raise NonFiniteEnergyError(f"descent norm is not finite at pass {passes}")
        wnorm = math.sqrt(max(norm_squared, 0.0))
        scale = energy_scale(ctx, coeffs)

        if wnorm < cfg.delta_w or norm_squared <= cfg.energy_rtol * scale:
            history.append(IterationRecord(iteration=passes, energy=energy, wnorm=wnorm))
            stop_reason = 'wnorm'
            break

        search = golden_section(
            _line_energy(ctx, coeffs, direction), rho, cfg.line_search_delta * max(1.0, rho)
        )
        if search.x < cfg.delta_rho or search.y >= energy - cfg.energy_rtol * scale:
            history.append(IterationRecord(iteration=passes, energy=energy, wnorm=wnorm,
                                           evaluations=search.evaluations))
            stop_reason = 'rho'
            break

        coeffs = coeffs - search.x * direction
        energy, rho = search.y, search.x
        accepted += 1
        history.append(IterationRecord(iteration=passes, energy=energy, wnorm=wnorm, rho=rho,
                                       evaluations=search.evaluations))
        logger.debug(f"📊 pass {passes}: J={energy:.15e} ||w||={wnorm:.3e} rho={rho:.6e} evals={search.evaluations}")

    if not math.isfinite(energy):
        raise SolverError(f"descent ended with non-finite energy after {passes} passes")
    stationarity = float(np.max(np.abs(grad_Jh(ctx, coeffs)))) if len(coeffs) else 0.0
    logger.info(
        f"✅ Descent finished ({stop_reason}): {passes} passes, {accepted} steps, "
        f"J={energy:.12e}, |J'|_inf={stationarity:.3e}"
    )
    return DescentResult(
        solution=DGFunction(ctx.scalar_space, coeffs), history=history, stop_reason=stop_reason,
        passes=passes, accepted_steps=accepted, stationarity=stationarity,
    )
