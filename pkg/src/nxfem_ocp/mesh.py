"""Uniform triangulations of axis-aligned rectangles.

Every cell of the n-by-n grid is split along the diagonal from its
lower-left to its upper-right corner, which keeps the construction
deterministic and the triangles uniformly shape regular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "ConfigurationError", "build_uniform_mesh", "triangle_area",
           "mesh_edges", "write_mesh_csv"]


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (domain, counts, degrees...)."""


@dataclass
class Mesh:
    """Immutable triangulation with vertex/element connectivity.

    Attributes
    ----------
    vertices : (V, 2) float array of vertex coordinates
    triangles : (T, 3) int array, counter-clockwise vertex indices
    boundary_vertex : (V,) bool, True for vertices on the rectangle boundary
    n : subdivisions per axis (0 for hand-built meshes)
    domain : (x0, x1, y0, y1)
    h : max triangle diameter
    areas : (T,) triangle areas
    grad_bary : (T, 3, 2) constant gradients of the three hat functions
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    n: int
    domain: tuple
    h: float = field(init=False)
    areas: np.ndarray = field(init=False)
    grad_bary: np.ndarray = field(init=False)

    def __post_init__(self):
        coords = self.vertices[self.triangles]          # (T, 3, 2)
        e0 = coords[:, 1] - coords[:, 0]
        e1 = coords[:, 2] - coords[:, 0]
        det = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
        if np.any(det <= 0.0):
            raise ConfigurationError("mesh contains a non-positively oriented triangle")
        self.areas = 0.5 * det
        # gradient of hat i is the inward perpendicular of the opposite edge / (2A)
        grads = np.empty((len(self.triangles), 3, 2))
        for i in range(3):
            pj = coords[:, (i + 1) % 3]
            pk = coords[:, (i + 2) % 3]
            grads[:, i, 0] = pj[:, 1] - pk[:, 1]
            grads[:, i, 1] = pk[:, 0] - pj[:, 0]
        self.grad_bary = grads / (2.0 * self.areas)[:, None, None]
        edges = coords - np.roll(coords, 1, axis=1)
        self.h = float(np.sqrt((edges ** 2).sum(axis=2)).max())
        for arr in (self.vertices, self.triangles, self.boundary_vertex,
                    self.areas, self.grad_bary):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, domain=None):
        """Build a mesh from raw arrays; boundary vertices are taken from
        edges incident to a single triangle."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        counts = {}
        for tri in triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        boundary = np.zeros(len(vertices), dtype=bool)
        for (a, b), c in counts.items():
            if c == 1:
                boundary[a] = boundary[b] = True
        if domain is None:
            domain = (vertices[:, 0].min(), vertices[:, 0].max(),
                      vertices[:, 1].min(), vertices[:, 1].max())
        return cls(vertices, triangles, boundary, 0, tuple(domain))

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def tri_coords(self, e):
        """Coordinates of element e, shape (3, 2)."""
        return self.vertices[self.triangles[e]]

    def barycentric(self, e, points):
        """Barycentric coordinates of physical points inside element e."""
        points = np.atleast_2d(points)
        p0 = self.vertices[self.triangles[e, 0]]
        lam12 = (points - p0) @ np.stack(
            [self.grad_bary[e, 1], self.grad_bary[e, 2]], axis=1)
        lam0 = 1.0 - lam12.sum(axis=1)
        return np.column_stack([lam0, lam12])


def build_uniform_mesh(domain, n):
    """Uniform n x n triangulation of the rectangle [x0,x1] x [y0,y1].

    Each cell is split along its lower-left/upper-right diagonal, giving
    2 n^2 triangles and (n+1)^2 vertices.
    """
    x0, x1, y0, y1 = domain
    if not (np.isfinite([x0, x1, y0, y1]).all() and x1 > x0 and y1 > y0):
        raise ConfigurationError(f"invalid rectangle {domain!r}")
    if n < 2:
        raise ConfigurationError(f"subdivision count must be >= 2, got {n}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)                 # row-major in y
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (iy * (n + 1) + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    gx, gy = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    boundary = ((gx == 0) | (gx == n) | (gy == 0) | (gy == n)).ravel()

    return Mesh(vertices, triangles, boundary, n, tuple(domain))


def triangle_area(coords):
    """Area of a triangle from its (3, 2) vertex coordinates (shoelace)."""
    coords = np.asarray(coords, dtype=float)
    e0 = coords[1] - coords[0]
    e1 = coords[2] - coords[0]
    return 0.5 * abs(e0[0] * e1[1] - e0[1] * e1[0])


def mesh_edges(mesh):
    """Map (vmin, vmax) -> list of incident triangle indices."""
    edges = {}
    for e, tri in enumerate(mesh.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges.setdefault(key, []).append(e)
    return edges


def write_mesh_csv(mesh, vertex_path, triangle_path):
    """Dump vertex and triangle tables for external plotting."""
    with open(vertex_path, "w") as fh:
        fh.write("vertex,x,y,boundary\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i},{x:.17e},{y:.17e},{int(mesh.boundary_vertex[i])}\n")
    with open(triangle_path, "w") as fh:
        fh.write("triangle,v0,v1,v2\n")
        for e, tri in enumerate(mesh.triangles):
            fh.write(f"{e},{tri[0]},{tri[1]},{tri[2]}\n")
