"""
Property and oracle suites run by `manage.py run_study --checks`.

Every suite takes a seeded generator and returns CheckOutcome records, so a
given seed always produces the same summary. The quadrature and bernstein
suites also take the triangle rule factory, which tests swap for a
corrupted table.
"""
import logging
from typing import Callable, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import comb

from .dgspace import DGFunction, build_space, l2_project, mass_matrix, mass_solve
from .descent import SolverConfig, golden_section, steepest_descent
from .energy import EnergyContext, a_inverse, a_op, energy_Jh, grad_Jh
from .ldg_ops import apply_ddg, build_flux_params, dirichlet_moments, dual_pairing, primal_pairing
from .linsolve import assemble_precond, descent_norm_squared, solve_spd
from .mesh import DomainKind, DomainSpec, FaceKind, build_coarse, mesh_quality, refine_uniform
from .problems import (
    DEGENERATE_RADIUS,
    ProblemSpec,
    example_degenerate,
    example_linear,
    example_neumann_smoke,
    example_regular,
    example_smooth,
)
from .quadbasis import (
    bernstein_eval,
    bernstein_indices,
    gauss_segment,
    gauss_triangle,
    lobatto_segment,
    lobatto_triangle,
    monomial_moment,
    reference_mass,
)
from .report import LevelResult, convergence_orders, lp_norm, recover_gradients

logger = logging.getLogger(__name__)

# convexity and monotonicity samples per exponent
CONVEXITY_SAMPLES = 1000
DERIVATIVE_PAIRS = 30
PAIRING_SAMPLES = 20
DEFINITENESS_VECTORS = 50


class CheckOutcome(BaseModel):
    suite: str
    name: str
    passed: bool
    detail: str = ''


class CheckSummary(BaseModel):
    seed: int
    outcomes: List[CheckOutcome]

    @property
    def passed(self) -> bool:
        return all(outcome.passed for outcome in self.outcomes)

    @property
    def failures(self) -> List[CheckOutcome]:
        return [outcome for outcome in self.outcomes if not outcome.passed]


def _bound(suite: str, name: str, error: float, tolerance: float) -> CheckOutcome:
    error = float(error)
    return CheckOutcome(
        suite=suite, name=name, passed=bool(np.isfinite(error) and error <= tolerance),
        detail=f"{error:.3e} <= {tolerance:.1e}",
    )


def _simplex_points(rng, n: int) -> np.ndarray:
    points = rng.random((n, 2))
    outside = points.sum(axis=1) > 1.0
    points[outside] = 1.0 - points[outside][:, ::-1]
    return points


def _pentagon(level: int):
    mesh = build_coarse(DomainSpec(kind=DomainKind.PENTAGON, boundary=()))
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def _smooth_data_context(mesh, k: int, p: float) -> EnergyContext:
    return EnergyContext.build(
        mesh, k, p, source=lambda x, y: 1.0 + x, dirichlet=lambda x, y: x * y - 0.5 * y,
    )


def difference_steps(p: float) -> Tuple[float, ...]:
    """Central-difference steps for the derivative oracle at exponent p."""
    # for p < 2, A is only (p-1)-Hölder where a face jump crosses zero and the
    # truncation error decays like t^(p-1)
    return (1e-6,) if p < 2.0 else (1e-4, 5e-5)


def _bernstein_gram(k: int) -> np.ndarray:
    """Closed-form Gram matrix: the product of two degree-k polynomials is a degree-2k one."""
    alpha = bernstein_indices(k)

    def multinomial(index):
        a, b, c = (int(v) for v in index)
        return comb(a + b + c, a, exact=True) * comb(b + c, b, exact=True)

    coef = np.array([multinomial(a) for a in alpha], dtype=float)
    gram = np.empty((len(alpha), len(alpha)))
    for i, a in enumerate(alpha):
        for j, b in enumerate(alpha):
            gram[i, j] = coef[i] * coef[j] / multinomial(a + b)
    return gram * 0.5 / comb(2 * k + 2, 2, exact=True)


def quadrature_suite(rng, triangle_rule: Callable = gauss_triangle) -> List[CheckOutcome]:
    outcomes = []
    for degree in range(1, 14):
        rule = triangle_rule(degree)
        x, y = rule.points[:, 0], rule.points[:, 1]
        worst = max(
            abs(float(rule.weights @ (x ** a * y ** b)) - monomial_moment(a, b)) / monomial_moment(a, b)
            for a in range(degree + 1) for b in range(degree + 1 - a)
        )
        outcomes.append(_bound('quadrature', f'triangle degree {degree} moments', worst, 1e-12))
        outcomes.append(CheckOutcome(
            suite='quadrature', name=f'triangle degree {degree} weights positive',
            passed=bool(np.all(rule.weights > 0.0)), detail=f"min weight {rule.weights.min():.3e}",
        ))
    for n in range(1, 9):
        rule = gauss_segment(n)
        worst = max(abs(float(rule.weights @ rule.points ** m) - 1.0 / (m + 1)) for m in range(2 * n))
        outcomes.append(_bound('quadrature', f'segment {n} points moments', worst, 1e-14))
    return outcomes


def bernstein_suite(rng, triangle_rule: Callable = gauss_triangle) -> List[CheckOutcome]:
    outcomes = []
    points = _simplex_points(rng, 50)
    for k in range(7):
        basis = bernstein_eval(k, points)
        outcomes.append(_bound('bernstein', f'k={k} partition of unity',
                               np.max(np.abs(basis.values.sum(axis=1) - 1.0)), 1e-14))
        outcomes.append(_bound('bernstein', f'k={k} gradients sum to zero',
                               np.max(np.abs(basis.gradients.sum(axis=1))), 1e-13))
        outside = max(0.0, -basis.values.min(), basis.values.max() - 1.0)
        outcomes.append(_bound('bernstein', f'k={k} values in [0, 1]', outside, 1e-15))
    for k in range(1, 7):
        try:
            np.linalg.cholesky(reference_mass(k))
            passed, detail = True, 'Cholesky succeeded'
        except np.linalg.LinAlgError as e:
            passed, detail = False, str(e)
        outcomes.append(CheckOutcome(suite='bernstein', name=f'k={k} mass SPD', passed=passed, detail=detail))

        rule = triangle_rule(2 * k)
        values = bernstein_eval(k, rule.points).values
        gram = np.einsum('q,qi,qj->ij', rule.weights, values, values)
        exact = _bernstein_gram(k)
        outcomes.append(_bound('bernstein', f'k={k} Gram matrix by quadrature',
                               np.max(np.abs(gram - exact)) / np.max(np.abs(exact)), 1e-12))

        lattice = lobatto_triangle(k)
        inside = bool(len(lattice) == (k + 1) * (k + 2) // 2 and np.all(lattice >= -1e-14)
                      and np.all(lattice.sum(axis=1) <= 1.0 + 1e-14))
        outcomes.append(CheckOutcome(suite='bernstein', name=f'k={k} Lobatto lattice in the triangle', passed=inside))
        edge = np.sort(lattice[np.abs(lattice[:, 1]) < 1e-14, 0])
        outcomes.append(_bound('bernstein', f'k={k} Lobatto lattice edge nodes',
                               np.max(np.abs(edge - lobatto_segment(k + 1))) if len(edge) == k + 1 else np.inf, 1e-14))
        singular = np.linalg.svd(bernstein_eval(k, lattice).values, compute_uv=False)
        outcomes.append(_bound('bernstein', f'k={k} unisolvent on the Lobatto lattice',
                               singular[0] / singular[-1], 1e8))
    return outcomes


def mesh_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    for kind in DomainKind:
        domain = DomainSpec(kind=kind, boundary=())
        mesh = build_coarse(domain)
        shape_ratios = []
        for level in range(3):
            tag = f'{kind.value} level {level}'
            outcomes.append(_bound('mesh', f'{tag} area', abs(mesh.areas.sum() - domain.area) / domain.area, 1e-12))
            aspect, _ = mesh_quality(mesh)
            outcomes.append(_bound('mesh', f'{tag} aspect ratio', aspect, 10.0))
            counts = np.bincount(mesh.element_faces.ravel(), minlength=mesh.n_faces)
            expected = np.where(mesh.face_kind == FaceKind.INTERIOR, 2, 1)
            outcomes.append(CheckOutcome(suite='mesh', name=f'{tag} face incidence',
                                         passed=bool(np.array_equal(counts, expected))))
            left = mesh.areas[mesh.face_elements[:, 0]]
            shape_ratios.append(np.sort(mesh.face_heights * mesh.face_lengths / left)[[0, -1]])
            coarser, mesh = mesh, refine_uniform(mesh)
            outcomes.append(_bound('mesh', f'{tag} h halves', abs(mesh.h - coarser.h / 2.0) / coarser.h, 1e-14))
        spread = np.max(np.abs(np.array(shape_ratios) - shape_ratios[0]))
        outcomes.append(_bound('mesh', f'{kind.value} h_e |e| / |K| uniform', spread, 1e-9))
    return outcomes


def dgspace_suite(rng) -> List[CheckOutcome]:
    mesh = _pentagon(1)
    space = build_space(mesh, 2)
    outcomes = []

    def polynomial(x, y):
        return x ** 2 + x * y - y

    projected = l2_project(space, polynomial)
    exact = polynomial(space.quad_points[..., 0], space.quad_points[..., 1])
    outcomes.append(_bound('dgspace', 'projection reproduces P2', np.max(np.abs(projected.values()[:, 0] - exact)), 1e-11))

    def smooth(x, y):
        return np.sin(x) * np.exp(y)

    residual = smooth(space.quad_points[..., 0], space.quad_points[..., 1]) - l2_project(space, smooth).values()[:, 0]
    worst = 0.0
    for _ in range(5):
        v = DGFunction(space, rng.standard_normal(space.n_dofs))
        worst = max(worst, abs(float(np.sum(space.quad_weights * residual * v.values()[:, 0]))))
    outcomes.append(_bound('dgspace', 'projection error orthogonal to V_h', worst, 1e-10))

    c = rng.standard_normal(space.n_dofs)
    round_trip = mass_solve(space, mass_matrix(space) @ c)
    outcomes.append(_bound('dgspace', 'mass solve round trip', np.max(np.abs(round_trip - c)) / np.max(np.abs(c)), 1e-11))
    return outcomes


def ldg_ops_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    for level, k in ((0, 1), (1, 2), (2, 3)):
        mesh = _pentagon(level)
        ctx = _smooth_data_context(mesh, k, 2.0)
        op = ctx.grad_op

        def g(x, y):
            return np.cos(x) + y

        g_moments = dirichlet_moments(ctx.vector_space, g)
        worst = 0.0
        for _ in range(PAIRING_SAMPLES):
            v = DGFunction(ctx.scalar_space, rng.standard_normal(ctx.scalar_space.n_dofs))
            zeta = DGFunction(ctx.vector_space, rng.standard_normal(ctx.vector_space.n_dofs))
            primal = primal_pairing(op, v, zeta, g)
            dual = dual_pairing(op, v, zeta, g)
            assembled = float(zeta.coeffs @ (op.matrix @ v.coeffs + g_moments))
            scale = max(1.0, abs(primal))
            worst = max(worst, abs(primal - dual) / scale, abs(primal - assembled) / scale)
        outcomes.append(_bound('ldg_ops', f'level {level} k={k} primal/dual/assembled', worst, 1e-11))

        linear = l2_project(ctx.scalar_space, lambda x, y: x)
        gradient = apply_ddg(op, linear, dirichlet_moments(ctx.vector_space, lambda x, y: x)).values()
        target = np.zeros_like(gradient)
        target[:, 0] = 1.0
        outcomes.append(_bound('ldg_ops', f'level {level} k={k} consistency on x', np.max(np.abs(gradient - target)), 1e-11))

        flux = build_flux_params(mesh)
        interior = mesh.faces_of_kind(FaceKind.INTERIOR)
        norms = np.linalg.norm(flux.c12[interior], axis=1)
        outcomes.append(_bound('ldg_ops', f'level {level} |C12| = 1/2', np.max(np.abs(norms - 0.5)), 1e-15))
    return outcomes


def energy_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    for p in (1.2, 1.5, 3.0, 4.0):
        a = rng.standard_normal((CONVEXITY_SAMPLES, 2))
        b = rng.standard_normal((CONVEXITY_SAMPLES, 2))
        monotone = np.einsum('ij,ij->i', b - a, a_op(b, p) - a_op(a, p))
        outcomes.append(CheckOutcome(suite='energy', name=f'p={p} A strictly monotone',
                                     passed=bool(np.all(monotone > 0.0)), detail=f"min {monotone.min():.3e}"))
        lam = rng.random(CONVEXITY_SAMPLES)[:, None] * 3.0
        scaled = lam ** (p - 1.0) * a_op(a, p)
        homogeneity = np.max(np.abs(a_op(lam * a, p) - scaled) / (1.0 + np.abs(scaled)))
        outcomes.append(_bound('energy', f'p={p} A (p-1)-homogeneous', homogeneity, 1e-12))
        inverse = np.max(np.abs(a_inverse(a_op(a, p), p) - a) / (1.0 + np.abs(a)))
        outcomes.append(_bound('energy', f'p={p} A inverse round trip', inverse, 1e-10))

    mesh = _pentagon(1)
    for p in (1.5, 2.0, 3.0, 4.0):
        ctx = _smooth_data_context(mesh, 2, p)
        n = ctx.scalar_space.n_dofs
        worst = 0.0
        for _ in range(DERIVATIVE_PAIRS):
            u = rng.standard_normal(n)
            v = rng.standard_normal(n)
            directional = float(grad_Jh(ctx, u) @ v)
            for t in difference_steps(p):
                difference = (energy_Jh(ctx, u + t * v) - energy_Jh(ctx, u - t * v)) / (2.0 * t)
                worst = max(worst, abs(difference - directional) / (1.0 + abs(directional)))
        outcomes.append(_bound('energy', f'p={p} derivative vs central differences', worst, 1e-6))

        violation = 0.0
        for _ in range(CONVEXITY_SAMPLES):
            u, v, theta = rng.standard_normal(n), rng.standard_normal(n), rng.random()
            ju, jv = energy_Jh(ctx, u), energy_Jh(ctx, v)
            gap = energy_Jh(ctx, theta * u + (1.0 - theta) * v) - theta * ju - (1.0 - theta) * jv
            violation = max(violation, gap - 1e-12 * (1.0 + abs(ju) + abs(jv)))
        outcomes.append(_bound('energy', f'p={p} convexity', max(violation, 0.0), 0.0))
    return outcomes


def linsolve_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    mesh = _pentagon(1)
    for p in (1.5, 2.0, 3.0):
        ctx = _smooth_data_context(mesh, 2, p)
        n = ctx.scalar_space.n_dofs
        u = rng.standard_normal(n)
        system = assemble_precond(ctx, u, 1e-10)
        matrix = system.matrix
        asymmetry = abs(matrix - matrix.T).max() / abs(matrix).max()
        outcomes.append(_bound('linsolve', f'p={p} symmetric', asymmetry, 1e-12))

        energies, mismatch = [], 0.0
        for _ in range(DEFINITENESS_VECTORS):
            x = rng.standard_normal(n)
            quadratic = float(x @ (matrix @ x))
            energies.append(quadratic)
            mismatch = max(mismatch, abs(quadratic - descent_norm_squared(ctx, u, x, 1e-10)) / quadratic)
        outcomes.append(CheckOutcome(suite='linsolve', name=f'p={p} positive definite',
                                     passed=bool(min(energies) > 0.0), detail=f"min x'Ax {min(energies):.3e}"))
        outcomes.append(_bound('linsolve', f'p={p} matches descent norm', mismatch, 1e-10))

        c = rng.standard_normal(n)
        rhs = matrix @ c
        x = solve_spd(system, rhs).coeffs
        outcomes.append(_bound('linsolve', f'p={p} solve residual',
                               np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs), 1e-12))
        outcomes.append(_bound('linsolve', f'p={p} solve round trip', np.linalg.norm(x - c) / np.linalg.norm(c), 1e-8))
    return outcomes


def descent_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    search = golden_section(lambda x: (x - 1.0) ** 2, 1.0, 1e-8)
    outcomes.append(_bound('descent', 'golden section at the guess', abs(search.x - 1.0), 1e-8))
    search = golden_section(lambda x: (x - 2.0) ** 2, 0.5, 1e-6)
    outcomes.append(_bound('descent', 'golden section expansion', abs(search.x - 2.0), 1e-6))
    search = golden_section(lambda x: x, 1.0, 1e-4)
    outcomes.append(_bound('descent', 'golden section shrink', search.x, 1e-4))

    problem = example_linear()
    ctx = EnergyContext.for_problem(problem, build_coarse(problem.domain), 1)
    start = DGFunction(ctx.scalar_space, rng.standard_normal(ctx.scalar_space.n_dofs))
    result = steepest_descent(ctx, SolverConfig(eps=0.0), start)
    rho = result.history[1].rho if len(result.history) > 1 and result.history[1].rho is not None else 0.0
    outcomes.append(CheckOutcome(suite='descent', name='p=2 single step', passed=result.accepted_steps == 1,
                                 detail=f"{result.accepted_steps} accepted steps"))
    outcomes.append(_bound('descent', 'p=2 step length 1', abs(rho - 1.0), 1e-6))
    return outcomes


def _domain_points(rng, problem: ProblemSpec, n: int) -> np.ndarray:
    """Points inside the problem's domain, away from the origin and the degenerate kink."""
    if problem.domain.kind == DomainKind.SQUARE:
        return rng.uniform(1.0, 2.0, (n, 2))
    kink = DEGENERATE_RADIUS if problem.name == 'degenerate' else None
    chosen = np.empty((0, 2))
    while len(chosen) < n:
        candidates = rng.uniform(-1.0, 1.0, (4 * n, 2))
        x, y = candidates.T
        r = np.hypot(x, y)
        keep = (y - x + 1.0 >= 0.0) & (r > 0.05)
        if kink is not None:
            keep &= np.abs(r - kink) > 0.05
        chosen = np.concatenate([chosen, candidates[keep]])
    return chosen[:n]


def _divergence(stress, x, y, h: float) -> np.ndarray:
    dx = (stress(x + h, y)[..., 0] - stress(x - h, y)[..., 0]) / (2.0 * h)
    dy = (stress(x, y + h)[..., 1] - stress(x, y - h)[..., 1]) / (2.0 * h)
    return dx + dy


def problems_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    problems = (
        example_linear(), example_regular(0.0, 1.5), example_regular(7.0, 4.0), example_degenerate(4.0),
        example_smooth(1.5), example_smooth(3.0), example_neumann_smoke(),
    )
    for problem in problems:
        tag = f'{problem.name} p={problem.p}'
        if problem.radial_exponent is not None:
            tag += f' sigma={problem.radial_exponent}'
        x, y = _domain_points(rng, problem, 200).T

        q = problem.q(x, y)
        stress = problem.stress(x, y)
        outcomes.append(_bound('problems', f'{tag} sigma = A(q)',
                               np.max(np.abs(stress - a_op(q, problem.p)) / np.maximum(1.0, np.abs(stress))), 1e-10))

        h = 1e-6
        difference = np.stack([
            (problem.u(x + h, y) - problem.u(x - h, y)) / (2.0 * h),
            (problem.u(x, y + h) - problem.u(x, y - h)) / (2.0 * h),
        ], axis=-1)
        outcomes.append(_bound('problems', f'{tag} q = grad u',
                               np.max(np.abs(difference - q) / np.maximum(1.0, np.abs(q))), 1e-6))

        f = problem.f(x, y)
        residual = -_divergence(problem.stress, x, y, 1e-5) - f
        outcomes.append(_bound('problems', f'{tag} -div sigma = f',
                               np.max(np.abs(residual) / np.maximum(1.0, np.abs(f))), 1e-4))

        if problem.domain.kind == DomainKind.PENTAGON and problem.name != 'linear':
            x, y = rng.uniform(-0.7, 0.7, (2, 100))
            rotated = (-y, x)
            spread = np.max(np.abs(problem.u(*rotated) - problem.u(x, y)))
            for field in (problem.q, problem.stress):
                spread = max(spread, np.max(np.abs(
                    np.linalg.norm(field(*rotated), axis=-1) - np.linalg.norm(field(x, y), axis=-1)
                )))
            outcomes.append(_bound('problems', f'{tag} radial symmetry', spread, 1e-12))
    return outcomes


def report_suite(rng) -> List[CheckOutcome]:
    outcomes = []
    mesh = _pentagon(1)
    ctx = _smooth_data_context(mesh, 2, 2.0)
    u = DGFunction(ctx.scalar_space, rng.standard_normal(ctx.scalar_space.n_dofs))
    q_h, sigma_h = recover_gradients(ctx, u)
    outcomes.append(_bound('report', 'p=2 recovers sigma_h = q_h',
                           np.max(np.abs(sigma_h.coeffs - q_h.coeffs)) / max(1.0, np.max(np.abs(q_h.coeffs))), 1e-12))

    ones = np.ones((mesh.n_elements, 1, ctx.scalar_space.quad_weights.shape[1]))
    area = float(mesh.areas.sum())
    for p in (1.5, 3.0):
        outcomes.append(_bound('report', f'p={p} L^p norm of one',
                               abs(lp_norm(ctx, ones, p) - area ** (1.0 / p)), 1e-12))

    rates = 1.0 + 2.0 * rng.random(3)
    errors = rng.uniform(0.1, 1.0, (3, 1)) * 2.0 ** (-rates[:, None] * np.arange(4))
    results = [
        LevelResult(level=level, n_elements=7 * 4 ** level, n_dofs=42 * 4 ** level,
                    err_u=errors[0, level], err_q=errors[1, level], err_sigma=errors[2, level])
        for level in range(4)
    ]
    plain = convergence_orders(results)
    worst = max(
        abs(getattr(row, name) - rate)
        for row in plain[1:] for name, rate in zip(('ord_u', 'ord_q', 'ord_sigma'), rates)
    )
    outcomes.append(_bound('report', 'orders of a power law', worst, 1e-12))

    scale = 10.0 ** rng.uniform(-6.0, 6.0)
    scaled = convergence_orders([
        row.model_copy(update={'err_u': scale * row.err_u, 'err_q': scale * row.err_q, 'err_sigma': scale * row.err_sigma})
        for row in results
    ])
    drift = max(
        abs(getattr(a, name) - getattr(b, name))
        for a, b in zip(plain[1:], scaled[1:]) for name in ('ord_u', 'ord_q', 'ord_sigma')
    )
    outcomes.append(_bound('report', 'orders invariant under error scaling', drift, 1e-12))
    return outcomes


SUITES: Dict[str, Callable] = {
    'quadrature': quadrature_suite,
    'bernstein': bernstein_suite,
    'mesh': mesh_suite,
    'dgspace': dgspace_suite,
    'ldg_ops': ldg_ops_suite,
    'energy': energy_suite,
    'linsolve': linsolve_suite,
    'descent': descent_suite,
    'problems': problems_suite,
    'report': report_suite,
}
RULE_SUITES = frozenset({'quadrature', 'bernstein'})


def run_checks(seed: int = 0, triangle_rule: Callable = gauss_triangle, suites=None) -> CheckSummary:
    rng = np.random.default_rng(seed)
    outcomes: List[CheckOutcome] = []
    for name in suites or SUITES:
        logger.info(f"🔧 Running {name} checks")
        suite = SUITES[name]
        outcomes.extend(suite(rng, triangle_rule) if name in RULE_SUITES else suite(rng))
    summary = CheckSummary(seed=seed, outcomes=outcomes)
    if summary.passed:
        logger.info(f"✅ All {len(outcomes)} checks passed (seed={seed})")
    else:
        for failure in summary.failures:
            logger.error(f"❌ {failure.suite}: {failure.name} ({failure.detail})")
    return summary
