"""
Convergence studies: one problem across refinement levels and degrees.
"""
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .dgspace import MAX_DEGREE
from .descent import DescentResult, SolverConfig, steepest_descent
from .energy import EnergyContext
from .exceptions import LDGError
from .linsolve import SolverMethod, poisson_initial_guess
from .mesh import Mesh, build_coarse, refine_uniform, write_mesh
from .problems import PROBLEMS, ProblemSpec, get_problem
from .report import LevelResult, convergence_orders, error_norms, recover_gradients, write_history, write_table

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """One study: a problem, its degrees and levels, and the solver parameters."""

    model_config = ConfigDict(extra='forbid')

    problem: str = Field(..., description="Problem id")
    p: Optional[float] = Field(None, gt=1.0, description="Exponent; the problem default when omitted")
    sigma: Optional[float] = Field(None, ge=0.0, description="Radial exponent of the regular case")
    degrees: List[int] = Field(default_factory=lambda: [1], min_length=1)
    levels: int = Field(4, ge=1, description="Number of meshes, coarse mesh included")
    eta: float = Field(10.0, gt=0.0)
    eps: float = Field(1e-14, ge=0.0)
    tol_w: float = Field(1e-16, gt=0.0)
    tol_rho: float = Field(1e-16, gt=0.0)
    max_iters: int = Field(500, ge=1)
    out: Path = Path('results')
    linear_solver: SolverMethod = 'cg'
    timing: bool = True
    write_meshes: bool = Field(False, description="Also dump every level's mesh as mesh_l{level}.txt")

    @field_validator('problem')
    @classmethod
    def validate_problem(cls, v):
        if v not in PROBLEMS:
            raise ValueError(f"unknown problem '{v}', choose from {', '.join(PROBLEMS)}")
        return v

    @field_validator('degrees')
    @classmethod
    def validate_degrees(cls, v):
        bad = [k for k in v if not 1 <= k <= MAX_DEGREE]
        if bad:
            raise ValueError(f"degrees must lie in 1..{MAX_DEGREE}, got {bad}")
        return sorted(set(v))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            eps=self.eps, delta_w=self.tol_w, delta_rho=self.tol_rho, max_iters=self.max_iters,
            line_search_delta=self.tol_rho, linear_solver=self.linear_solver,
        )


class RunReport(BaseModel):
    problem: str
    p: float
    tables: Dict[int, List[LevelResult]]
    files: List[Path] = Field(default_factory=list)


def build_meshes(problem: ProblemSpec, levels: int) -> List[Mesh]:
    meshes = [build_coarse(problem.domain)]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def solve_level(problem: ProblemSpec, mesh: Mesh, k: int, cfg: RunConfig, level: int = 0):
    """Assemble, solve and measure one (degree, mesh) pair; returns (LevelResult, DescentResult)."""
    started = time.perf_counter()
    ctx = EnergyContext.for_problem(problem, mesh, k, eta=cfg.eta)
    solver = cfg.solver_config()
    u0 = poisson_initial_guess(ctx, solver.linear_solver)
    descent: DescentResult = steepest_descent(ctx, solver, u0)
    q_h, sigma_h = recover_gradients(ctx, descent.solution)
    err_u, err_q, err_sigma = error_norms(ctx, descent.solution, q_h, sigma_h, problem)
    seconds = time.perf_counter() - started if cfg.timing else 0.0

    result = LevelResult(
        level=level, n_elements=mesh.n_elements, n_dofs=ctx.scalar_space.n_dofs,
        err_u=err_u, err_q=err_q, err_sigma=err_sigma, iters=descent.passes, seconds=seconds,
    )
    logger.info(
        f"📊 k={k} level={level}: Ne={mesh.n_elements} err_u={err_u:.4e} err_q={err_q:.4e} "
        f"err_sigma={err_sigma:.4e} iters={descent.passes}"
    )
    return result, descent


def run_study(cfg: RunConfig) -> RunReport:
    problem = get_problem(cfg.problem, p=cfg.p, sigma=cfg.sigma)
    logger.info(f"🚀 Study '{problem.name}' ({problem.description}): degrees={cfg.degrees}, levels={cfg.levels}")
    meshes = build_meshes(problem, cfg.levels)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    tables: Dict[int, List[LevelResult]] = {}
    files: List[Path] = []
    if cfg.write_meshes:
        files.extend(write_mesh(mesh, out / f"mesh_l{level}.txt") for level, mesh in enumerate(meshes))
    for k in cfg.degrees:
        results = []
        for level, mesh in enumerate(meshes):
            try:
                result, descent = solve_level(problem, mesh, k, cfg, level)
            except LDGError as e:
                logger.error(f"❌ k={k} level={level} failed: {e}")
                logger.exception("Full traceback:")
                raise
            results.append(result)
            files.append(write_history(descent.history, out / f"history_k{k}_l{level}.csv"))
        tables[k] = convergence_orders(results)
        files.append(write_table(tables[k], out / f"table_k{k}.csv"))

    logger.info(f"✅ Study '{problem.name}' finished, {len(files)} files in {out}")
    return RunReport(problem=problem.name, p=problem.p, tables=tables, files=files)
