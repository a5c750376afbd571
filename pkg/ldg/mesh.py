"""
Conforming triangular meshes of the study domains and their face geometry.

Local face i of an element is the edge opposite its vertex i, traversed
from vertex i+1 to vertex i+2. Each face stores its vertices in the order
of its left element, so the stored normal points out of the left element.
"""
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

logger = logging.getLogger(__name__)

LOCAL_FACES = np.array([[1, 2], [2, 0], [0, 1]])


class FaceKind(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


class BoundaryCondition(str, Enum):
    DIRICHLET = 'dirichlet'
    NEUMANN = 'neumann'


class DomainKind(str, Enum):
    PENTAGON = 'pentagon'
    SQUARE = 'unit-square-shifted'


# boundary segments, counterclockwise
DOMAIN_SEGMENTS = {
    DomainKind.PENTAGON: ((-1.0, -1.0), (0.0, -1.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0)),
    DomainKind.SQUARE: ((1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)),
}


class DomainSpec(BaseModel):
    """
    Study domain plus one boundary condition per boundary segment.

    Pentagon segments: bottom, diagonal, right, top, left.
    Square segments: bottom, right, top, left.
    """
    model_config = ConfigDict(frozen=True)

    kind: DomainKind
    boundary: tuple[BoundaryCondition, ...]

    @model_validator(mode='before')
    @classmethod
    def default_to_dirichlet(cls, data):
        if not isinstance(data, dict) or data.get('boundary'):
            return data
        try:
            kind = DomainKind(data['kind'])
        except (KeyError, ValueError):
            return data
        return {**data, 'boundary': (BoundaryCondition.DIRICHLET,) * len(DOMAIN_SEGMENTS[kind])}

    @model_validator(mode='after')
    def check_boundary(self):
        segments = len(DOMAIN_SEGMENTS[self.kind])
        if len(self.boundary) != segments:
            raise ValueError(f"{self.kind.value} has {segments} boundary segments, got {len(self.boundary)} tags")
        if BoundaryCondition.DIRICHLET not in self.boundary:
            raise ValueError("the Dirichlet part of the boundary must have positive measure")
        return self

    @property
    def corners(self) -> np.ndarray:
        return np.array(DOMAIN_SEGMENTS[self.kind])

    @property
    def area(self) -> float:
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray
    domain: Optional[DomainSpec]
    faces: np.ndarray
    face_elements: np.ndarray
    face_local: np.ndarray
    face_orientation: np.ndarray
    face_kind: np.ndarray
    normals: np.ndarray
    face_lengths: np.ndarray
    face_heights: np.ndarray
    element_faces: np.ndarray
    areas: np.ndarray

    @classmethod
    def from_arrays(cls, vertices, elements, domain: Optional[DomainSpec] = None, neumann=()) -> 'Mesh':
        """
        Build the face tables of a conforming counterclockwise triangulation.

        Boundary faces take the condition of the domain segment containing
        them; without a domain every boundary face is Dirichlet except the
        face ids listed in `neumann`.
        """
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=int)
        n_vertices, n_elements = len(vertices), len(elements)

        corners = vertices[elements]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(areas <= 0.0):
            raise ValueError("elements must be non-degenerate and counterclockwise")

        edges = elements[:, LOCAL_FACES].reshape(-1, 2)
        keys = np.min(edges, axis=1) * n_vertices + np.max(edges, axis=1)
        _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise ValueError("an edge is shared by more than two elements")

        order = np.argsort(inverse, kind='stable')
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = order[starts]
        interior = counts == 2
        second = np.full(len(counts), -1)
        second[interior] = order[starts[interior] + 1]

        faces = edges[first]
        face_elements = np.stack([first // 3, np.where(interior, second // 3, -1)], axis=-1)
        face_local = np.stack([first % 3, np.where(interior, second % 3, -1)], axis=-1)
        right_start = np.where(interior, edges[np.maximum(second, 0), 0], -1)
        face_orientation = np.stack(
            [np.zeros(len(counts), dtype=int), np.where(right_start == faces[:, 0], 0, 1)], axis=-1
        )
        face_orientation[~interior, 1] = -1

        d = vertices[faces[:, 1]] - vertices[faces[:, 0]]
        lengths = np.hypot(d[:, 0], d[:, 1])
        normals = np.stack([d[:, 1], -d[:, 0]], axis=-1) / lengths[:, None]

        heights = 2.0 * areas[face_elements[:, 0]] / lengths
        right_heights = 2.0 * areas[np.maximum(face_elements[:, 1], 0)] / lengths
        heights = np.where(interior, np.minimum(heights, right_heights), heights)

        face_kind = np.full(len(counts), FaceKind.INTERIOR, dtype=int)
        boundary = np.flatnonzero(~interior)
        if domain is None:
            face_kind[boundary] = FaceKind.DIRICHLET
            face_kind[np.asarray(neumann, dtype=int)] = FaceKind.NEUMANN
        else:
            midpoints = 0.5 * (vertices[faces[boundary, 0]] + vertices[faces[boundary, 1]])
            segment = _nearest_segment(midpoints, domain.corners)
            tags = np.array([
                FaceKind.DIRICHLET if bc == BoundaryCondition.DIRICHLET else FaceKind.NEUMANN
                for bc in domain.boundary
            ])
            face_kind[boundary] = tags[segment]

        arrays = (vertices, elements, faces, face_elements, face_local, face_orientation, face_kind,
                  normals, lengths, heights, areas)
        for array in arrays:
            array.setflags(write=False)
        element_faces = inverse.reshape(n_elements, 3)
        element_faces.setflags(write=False)

        return cls(
            vertices=vertices, elements=elements, domain=domain, faces=faces,
            face_elements=face_elements, face_local=face_local, face_orientation=face_orientation,
            face_kind=face_kind, normals=normals, face_lengths=lengths, face_heights=heights,
            element_faces=element_faces, areas=areas,
        )

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def h(self) -> float:
        """Largest element diameter (longest edge for triangles)."""
        return float(np.max(self.face_lengths))

    def faces_of_kind(self, kind: FaceKind) -> np.ndarray:
        return np.flatnonzero(self.face_kind == kind)

    def element_diameters(self) -> np.ndarray:
        return np.max(self.face_lengths[self.element_faces], axis=1)


def _nearest_segment(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    start = corners
    end = np.roll(corners, -1, axis=0)
    d = end - start
    rel = points[:, None, :] - start[None, :, :]
    t = np.clip(np.einsum('psk,sk->ps', rel, d) / np.einsum('sk,sk->s', d, d), 0.0, 1.0)
    closest = start[None] + t[..., None] * d[None]
    return np.argmin(np.linalg.norm(points[:, None, :] - closest, axis=-1), axis=1)


def _grid(x0: float, x1: float, y0: float, y1: float, n: int):
    xs, ys = np.linspace(x0, x1, n + 1), np.linspace(y0, y1, n + 1)
    vertices = np.array([(x, y) for y in ys for x in xs])
    triangles = []
    for j in range(n):
        for i in range(n):
            ll = j * (n + 1) + i
            lr, ul, ur = ll + 1, ll + n + 1, ll + n + 2
            # diagonal of slope +1
            triangles.append((ll, lr, ur))
            triangles.append((ll, ur, ul))
    return vertices, np.array(triangles)


def _crossed_grid(x0: float, x1: float, y0: float, y1: float, n: int):
    """n x n cells, each cut into four triangles through its centre."""
    vertices, _ = _grid(x0, x1, y0, y1, n)
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    centres = np.array([(x0 + (i + 0.5) * hx, y0 + (j + 0.5) * hy) for j in range(n) for i in range(n)])
    offset = len(vertices)
    triangles = []
    for j in range(n):
        for i in range(n):
            ll = j * (n + 1) + i
            lr, ul, ur = ll + 1, ll + n + 1, ll + n + 2
            c = offset + j * n + i
            triangles += [(ll, lr, c), (lr, ur, c), (ur, ul, c), (ul, ll, c)]
    return np.concatenate([vertices, centres]), np.array(triangles)


def build_coarse(domain: DomainSpec) -> Mesh:
    """Level-0 mesh: 7 triangles on the pentagon, 16 on [1, 2]^2."""
    if domain.kind == DomainKind.PENTAGON:
        vertices, triangles = _grid(-1.0, 1.0, -1.0, 1.0, 2)
        centroids = vertices[triangles].mean(axis=1)
        triangles = triangles[centroids[:, 1] - centroids[:, 0] + 1.0 >= 0.0]
        used = np.unique(triangles)
        renumber = np.full(len(vertices), -1)
        renumber[used] = np.arange(len(used))
        mesh = Mesh.from_arrays(vertices[used], renumber[triangles], domain)
    elif domain.kind == DomainKind.SQUARE:
        vertices, triangles = _crossed_grid(1.0, 2.0, 1.0, 2.0, 2)
        mesh = Mesh.from_arrays(vertices, triangles, domain)
    else:
        raise ValueError(f"unsupported domain kind: {domain.kind}")
    logger.info(f"🔧 Coarse {domain.kind.value} mesh: {mesh.n_elements} elements, {mesh.n_faces} faces")
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children through its edge midpoints."""
    n_vertices = len(mesh.vertices)
    midpoints = 0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]])
    vertices = np.concatenate([mesh.vertices, midpoints])

    v0, v1, v2 = mesh.elements.T
    m0, m1, m2 = (n_vertices + mesh.element_faces).T
    children = np.stack([
        np.stack([v0, m2, m1], axis=-1),
        np.stack([m2, v1, m0], axis=-1),
        np.stack([m1, m0, v2], axis=-1),
        np.stack([m0, m1, m2], axis=-1),
    ], axis=1).reshape(-1, 3)

    neumann = ()
    if mesh.domain is None:
        # children of a Neumann face stay Neumann
        parent = np.flatnonzero(mesh.face_kind == FaceKind.NEUMANN)
        neumann_vertices = {frozenset((a, n_vertices + f)) for f in parent for a in mesh.faces[f]}
        refined = Mesh.from_arrays(vertices, children)
        neumann = [f for f in refined.faces_of_kind(FaceKind.DIRICHLET)
                   if frozenset(refined.faces[f]) in neumann_vertices]
    return Mesh.from_arrays(vertices, children, mesh.domain, neumann=neumann)


def refine_to(domain: DomainSpec, level: int) -> Mesh:
    mesh = build_coarse(domain)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def face_geometry(mesh: Mesh, face_id: int):
    """Unit normal out of the left element, length |e| and h_e of one face."""
    return mesh.normals[face_id], float(mesh.face_lengths[face_id]), float(mesh.face_heights[face_id])


def mesh_quality(mesh: Mesh):
    """Largest circumradius/inradius ratio and the quasi-uniformity ratio h_max / h_min."""
    sides = mesh.face_lengths[mesh.element_faces]
    a, b, c = sides.T
    circumradius = a * b * c / (4.0 * mesh.areas)
    inradius = 2.0 * mesh.areas / (a + b + c)
    diameters = mesh.element_diameters()
    return float(np.max(circumradius / inradius)), float(diameters.max() / diameters.min())


def write_mesh(mesh: Mesh, path) -> Path:
    path = Path(path)
    names = {FaceKind.INTERIOR: 'interior', FaceKind.DIRICHLET: 'dirichlet', FaceKind.NEUMANN: 'neumann'}
    lines = [f"v {x:.16g} {y:.16g}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.elements]
    lines += [
        f"f {i} {j} {left} {right} {names[FaceKind(kind)]}"
        for (i, j), (left, right), kind in zip(mesh.faces, mesh.face_elements, mesh.face_kind)
    ]
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"💾 Mesh written to {path}")
    return path
