"""
Quadrature rules and Bernstein bases on the reference simplex.

The reference triangle is {(0,0), (1,0), (0,1)} and barycentric coordinates
are ordered (1 - x - y, x, y). Segment rules live on [0, 1].
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from numpy.polynomial import legendre
from scipy.special import comb, roots_jacobi

logger = logging.getLogger(__name__)

MAX_TRIANGLE_DEGREE = 13


@dataclass(frozen=True)
class QuadRule:
    """Positive-weight rule; `points` is (n,) on a segment or (n, 2) on the triangle."""
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def barycentric(self) -> np.ndarray:
        x, y = self.points[:, 0], self.points[:, 1]
        return np.stack([1.0 - x - y, x, y], axis=-1)


@dataclass(frozen=True)
class BernsteinBasis:
    """
    Bernstein polynomials of degree k tabulated at a point set.

    values[q, i] is B_i at point q, gradients[q, i, :] its reference gradient.
    Functions are ordered by multi-index (a, b, c) with a descending, then b.
    """
    degree: int
    indices: np.ndarray
    values: np.ndarray
    gradients: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def _frozen(*arrays):
    for array in arrays:
        array.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def gauss_segment(n: int) -> QuadRule:
    """Gauss-Legendre rule with n points on [0, 1], exact to degree 2n - 1."""
    if n < 1:
        raise ValueError(f"gauss_segment needs at least one point, got {n}")
    t, w = legendre.leggauss(n)
    points, weights = _frozen(0.5 * (t + 1.0), 0.5 * w)
    return QuadRule(points=points, weights=weights, degree=2 * n - 1)


def _conical_product(n: int):
    # collapse the square onto the triangle: x = s (1 - t), y = t, dA = (1 - t) ds dt
    s_rule = gauss_segment(n)
    xi, wj = roots_jacobi(n, 1.0, 0.0)
    t = 0.5 * (1.0 + xi)
    wt = 0.25 * wj
    x = (s_rule.points[None, :] * (1.0 - t[:, None])).ravel()
    y = np.repeat(t, n)
    w = (wt[:, None] * s_rule.weights[None, :]).ravel()
    return np.stack([x, y], axis=-1), w


def _symmetrize(points: np.ndarray, weights: np.ndarray):
    lam = np.stack([1.0 - points[:, 0] - points[:, 1], points[:, 0], points[:, 1]], axis=-1)
    orbit_points, orbit_weights = [], []
    for perm in permutations(range(3)):
        permuted = lam[:, perm]
        orbit_points.append(permuted[:, 1:])
        orbit_weights.append(weights / 6.0)
    return np.concatenate(orbit_points), np.concatenate(orbit_weights)


@lru_cache(maxsize=None)
def gauss_triangle(degree: int) -> QuadRule:
    """
    Fully symmetric positive-weight rule on the reference triangle exact to `degree`.

    Degrees 1 and 2 use the classical centroid and three-point rules. Higher
    degrees use the collapsed Gauss-Legendre x Gauss-Jacobi(1, 0) product,
    averaged over the six permutations of the barycentric coordinates.
    """
    if degree < 1 or degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"triangle quadrature is tabulated for degrees 1..{MAX_TRIANGLE_DEGREE}, got {degree}"
        )
    if degree == 1:
        points = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        weights = np.array([0.5])
    elif degree == 2:
        points = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        weights = np.full(3, 1.0 / 6.0)
    else:
        n = (degree + 2) // 2
        points, weights = _symmetrize(*_conical_product(n))
    points, weights = _frozen(points, weights)
    return QuadRule(points=points, weights=weights, degree=degree)


def lobatto_segment(n: int) -> np.ndarray:
    """Gauss-Lobatto nodes on [0, 1]."""
    if n < 2:
        raise ValueError(f"a Lobatto set needs at least two points, got {n}")
    interior = legendre.Legendre.basis(n - 1).deriv().roots()
    nodes = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    return 0.5 * (nodes + 1.0)


def lobatto_triangle(k: int) -> np.ndarray:
    """
    Warped lattice of (k+1)(k+2)/2 points on the reference triangle.

    Built from 1D Lobatto nodes so that every edge carries the segment Lobatto
    set. Only used as an output point set.
    """
    if k == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    v = lobatto_segment(k + 1)
    idx = bernstein_indices(k)
    vi, vj, vl = v[idx[:, 0]], v[idx[:, 1]], v[idx[:, 2]]
    # index (i, j, l) sits next to vertex 0, 1, 2 respectively
    x = (1.0 + 2.0 * vj - vi - vl) / 3.0
    y = (1.0 + 2.0 * vl - vi - vj) / 3.0
    return np.stack([x, y], axis=-1)


@lru_cache(maxsize=None)
def bernstein_indices(k: int) -> np.ndarray:
    indices = [(a, b, k - a - b) for a in range(k, -1, -1) for b in range(k - a, -1, -1)]
    result = np.array(indices, dtype=int).reshape(-1, 3)
    result.setflags(write=False)
    return result


def bernstein_eval(k: int, pts) -> BernsteinBasis:
    """Evaluate B_abc = k!/(a!b!c!) l1^a l2^b l3^c and reference gradients at `pts`."""
    if k < 0:
        raise ValueError(f"Bernstein degree must be non-negative, got {k}")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lam = np.stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]], axis=-1)
    alpha = bernstein_indices(k)
    coef = np.array([comb(k, a, exact=True) * comb(k - a, b, exact=True) for a, b, _ in alpha], dtype=float)

    values = coef * np.prod(lam[:, None, :] ** alpha[None, :, :], axis=-1)

    dlam = np.empty((len(pts), len(alpha), 3))
    for m in range(3):
        reduced = alpha.copy()
        reduced[:, m] = np.maximum(alpha[:, m] - 1, 0)
        dlam[:, :, m] = coef * alpha[:, m] * np.prod(lam[:, None, :] ** reduced[None, :, :], axis=-1)
    gradients = np.stack([dlam[..., 1] - dlam[..., 0], dlam[..., 2] - dlam[..., 0]], axis=-1)

    return BernsteinBasis(degree=k, indices=alpha, values=values, gradients=gradients)


@lru_cache(maxsize=None)
def reference_mass(k: int) -> np.ndarray:
    """Bernstein Gram matrix on the reference triangle."""
    rule = gauss_triangle(max(2 * k, 1))
    basis = bernstein_eval(k, rule.points)
    mass = np.einsum('q,qi,qj->ij', rule.weights, basis.values, basis.values)
    mass.setflags(write=False)
    return mass


def monomial_moment(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!."""
    return 1.0 / ((a + b + 2) * (a + b + 1) * comb(a + b, a, exact=True))
