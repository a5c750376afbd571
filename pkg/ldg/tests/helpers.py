import numpy as np

from ldg.mesh import DomainKind, DomainSpec, Mesh, build_coarse, refine_uniform


def pentagon(level: int = 0) -> Mesh:
    mesh = build_coarse(DomainSpec(kind=DomainKind.PENTAGON, boundary=()))
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def square(level: int = 0) -> Mesh:
    mesh = build_coarse(DomainSpec(kind=DomainKind.SQUARE, boundary=()))
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def two_elements() -> Mesh:
    """Unit square cut along its diagonal, all boundary faces Dirichlet."""
    vertices = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    return Mesh.from_arrays(vertices, [(0, 1, 3), (0, 3, 2)])


def vertical_pair(flipped: bool = False) -> Mesh:
    """Two triangles sharing the edge x = 1; `flipped` lists the right one first."""
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 0.0)]
    elements = [(0, 1, 2), (1, 3, 2)]
    if flipped:
        elements = elements[::-1]
    return Mesh.from_arrays(vertices, elements)


def horizontal_pair() -> Mesh:
    """Two triangles sharing the edge y = 1."""
    vertices = [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 2.0)]
    return Mesh.from_arrays(vertices, [(0, 1, 2), (2, 1, 3)])


def interior_face(mesh: Mesh) -> int:
    return int(np.flatnonzero(mesh.face_elements[:, 1] >= 0)[0])
