"""
Manufactured test problems: exact u, q = grad u, sigma = A(q), source f and
boundary data on the study domains.

Every field is a callable of coordinate arrays (x, y); vector fields return
an array with a trailing axis of length 2.
"""
import logging
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .energy import PExponent
from .mesh import BoundaryCondition, DomainKind, DomainSpec

logger = logging.getLogger(__name__)

DEGENERATE_RADIUS = 0.3


class ProblemSpec(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(..., min_length=1, description="Problem id used on the command line")
    domain: DomainSpec
    exponent: PExponent
    u: Callable[..., Any]
    q: Callable[..., Any]
    stress: Callable[..., Any]
    f: Callable[..., Any]
    g_dirichlet: Callable[..., Any]
    g_neumann: Optional[Callable[..., Any]] = None
    radial_exponent: Optional[float] = None
    description: str = ''

    @property
    def p(self) -> float:
        return self.exponent.p

    @property
    def has_neumann(self) -> bool:
        return BoundaryCondition.NEUMANN in self.domain.boundary

    def neumann_data(self, x, y, n):
        """g_N . n on Neumann faces; sigma . n unless an explicit g_N is given."""
        field = self.g_neumann if self.g_neumann is not None else self.stress
        return np.sum(np.asarray(field(x, y), dtype=float) * n, axis=-1)


def _radius(x, y):
    return np.hypot(x, y)


def _stack(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return np.stack([a, b], axis=-1)


def _pentagon(boundary=()) -> DomainSpec:
    return DomainSpec(kind=DomainKind.PENTAGON, boundary=tuple(boundary))


def example_linear() -> ProblemSpec:
    """u = exp(sin(pi x)) cos(pi (x + y)) on the pentagon at p = 2."""
    pi = np.pi

    def u(x, y):
        return np.exp(np.sin(pi * x)) * np.cos(pi * (x + y))

    def q(x, y):
        e = np.exp(np.sin(pi * x))
        return _stack(
            pi * e * (np.cos(pi * x) * np.cos(pi * (x + y)) - np.sin(pi * (x + y))),
            -pi * e * np.sin(pi * (x + y)),
        )

    def f(x, y):
        e = np.exp(np.sin(pi * x))
        c, s = np.cos(pi * x), np.sin(pi * x)
        return pi ** 2 * e * (
            np.cos(pi * (x + y)) * (2.0 - c ** 2 + s) + 2.0 * c * np.sin(pi * (x + y))
        )

    return ProblemSpec(
        name='linear', domain=_pentagon(), exponent=PExponent(p=2.0),
        u=u, q=q, stress=q, f=f, g_dirichlet=u,
        description='linear case, p = 2',
    )


def example_regular(sigma: float = 0.0, p: float = 1.5) -> ProblemSpec:
    """Radial solution of -div A(grad u) = r^sigma vanishing on the unit circle."""
    if sigma < 0.0:
        raise ValueError(f"radial exponent must be non-negative, got {sigma}")
    exponent = PExponent(p=p)
    scale = (sigma + 2.0) ** (1.0 / (p - 1.0))

    def u(x, y):
        r = _radius(x, y)
        return (p - 1.0) / scale * (1.0 - r ** ((sigma + p) / (p - 1.0))) / (sigma + p)

    def q(x, y):
        r = _radius(x, y)
        # r^{(sigma+1)/(p-1)} (x, y) / r
        power = (sigma + 1.0) / (p - 1.0) - 1.0
        factor = np.where(r > 0.0, np.power(np.where(r > 0.0, r, 1.0), power), 0.0)
        return _stack(-factor * x / scale, -factor * y / scale)

    def stress(x, y):
        r = _radius(x, y)
        factor = np.where(r > 0.0, r, 0.0) ** sigma if sigma > 0.0 else np.ones_like(r)
        return _stack(-factor * x / (sigma + 2.0), -factor * y / (sigma + 2.0))

    def f(x, y):
        r = _radius(x, y)
        return r ** sigma if sigma > 0.0 else np.ones_like(r)

    return ProblemSpec(
        name='regular', domain=_pentagon(), exponent=exponent,
        u=u, q=q, stress=stress, f=f, g_dirichlet=u, radial_exponent=sigma,
        description=f'regular case, sigma = {sigma}, p = {p}',
    )


def example_degenerate(p: float = 4.0) -> ProblemSpec:
    """u = (r - a)^4 outside B_a(0) and 0 inside, a = 0.3."""
    exponent = PExponent(p=p)
    a = DEGENERATE_RADIUS

    def _outside(r):
        return np.maximum(r - a, 0.0)

    def u(x, y):
        return _outside(_radius(x, y)) ** 4

    def _radial(x, y, magnitude):
        r = _radius(x, y)
        safe = np.where(r > 0.0, r, 1.0)
        return _stack(magnitude * x / safe, magnitude * y / safe)

    def q(x, y):
        return _radial(x, y, 4.0 * _outside(_radius(x, y)) ** 3)

    def stress(x, y):
        return _radial(x, y, 4.0 ** (p - 1.0) * _outside(_radius(x, y)) ** (3.0 * p - 3.0))

    def f(x, y):
        r = _radius(x, y)
        safe = np.where(r > 0.0, r, 1.0)
        value = 4.0 ** (p - 1.0) * _outside(r) ** (3.0 * p - 4.0) * (2.0 - 3.0 * p + a / safe)
        return np.where(r >= a, value, 0.0)

    return ProblemSpec(
        name='degenerate', domain=_pentagon(), exponent=exponent,
        u=u, q=q, stress=stress, f=f, g_dirichlet=u,
        description=f'degenerate case, a = {a}, p = {p}',
    )


def example_smooth(p: float = 3.0) -> ProblemSpec:
    """p-harmonic u = r^{(p-2)/(p-1)} on [1, 2]^2."""
    if p == 2.0:
        raise ValueError("the smooth case is only defined for p != 2")
    exponent = PExponent(p=p)
    c = (p - 2.0) / (p - 1.0)

    def u(x, y):
        return _radius(x, y) ** c

    def q(x, y):
        factor = c * _radius(x, y) ** (-p / (p - 1.0))
        return _stack(factor * x, factor * y)

    def stress(x, y):
        factor = np.sign(p - 2.0) * abs(c) ** (p - 1.0) / _radius(x, y) ** 2
        return _stack(factor * x, factor * y)

    def f(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ProblemSpec(
        name='smooth', domain=DomainSpec(kind=DomainKind.SQUARE, boundary=()), exponent=exponent,
        u=u, q=q, stress=stress, f=f, g_dirichlet=u,
        description=f'smooth p-harmonic case, p = {p}',
    )


def example_neumann_smoke() -> ProblemSpec:
    """u = x^2 on [1, 2]^2 at p = 2 with a Neumann right edge."""
    dirichlet, neumann = BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN
    domain = DomainSpec(kind=DomainKind.SQUARE, boundary=(dirichlet, neumann, dirichlet, dirichlet))

    def u(x, y):
        return np.asarray(x, dtype=float) ** 2 + 0.0 * np.asarray(y, dtype=float)

    def q(x, y):
        return _stack(2.0 * np.asarray(x, dtype=float), 0.0 * np.asarray(y, dtype=float))

    def f(x, y):
        return np.full(np.broadcast(x, y).shape, -2.0)

    return ProblemSpec(
        name='neumann-smoke', domain=domain, exponent=PExponent(p=2.0),
        u=u, q=q, stress=q, f=f, g_dirichlet=u,
        description='Neumann smoke test, u = x^2, p = 2',
    )


# default parameters follow the study tables
PROBLEMS = {
    'linear': lambda p=None, sigma=None: example_linear(),
    'regular': lambda p=None, sigma=None: example_regular(0.0 if sigma is None else sigma, 1.5 if p is None else p),
    'degenerate': lambda p=None, sigma=None: example_degenerate(4.0 if p is None else p),
    'smooth': lambda p=None, sigma=None: example_smooth(3.0 if p is None else p),
    'neumann-smoke': lambda p=None, sigma=None: example_neumann_smoke(),
}


def get_problem(name: str, p: Optional[float] = None, sigma: Optional[float] = None) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem '{name}', choose from {', '.join(PROBLEMS)}") from None
    problem = factory(p=p, sigma=sigma)
    if p is not None and problem.p != p:
        logger.warning(f"⚠️ Problem '{name}' is fixed at p={problem.p}; ignoring p={p}")
    return problem
