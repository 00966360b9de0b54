"""Level-set interface representation, cut-element geometry and quadrature.

The interface is described by a scalar level-set function, negative on
subdomain 1 and positive on subdomain 2.  Inside every cut element it is
replaced by the straight chord between the two edge intersection points;
all interface integrals and normals refer to that chord.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .mesh import ConfigurationError, triangle_area

__all__ = ["LevelSet", "line_interface", "circle_interface", "ElementClass",
           "CutGeometry", "CutInfo", "GeometryError", "QuadRule",
           "classify_element", "compute_cut_geometry", "build_cut_info",
           "triangle_rule", "map_rule_to_triangle", "subtriangle_quadrature",
           "segment_quadrature", "refined_triangle_quadrature",
           "total_interface_length", "write_integration_mesh_csv"]

# vertices closer to the zero set than SNAP_REL * h count as subdomain-2
# vertices, so chords never pass through mesh nodes
SNAP_REL = 1e-12
ROOT_TOL = 1e-14


class GeometryError(RuntimeError):
    """Interface geometry violates the two-intersection-points assumption."""


class DegenerateCutError(GeometryError):
    """The chord of a sign-flagged element collapses (the interface only
    grazes a snapped vertex); the element is effectively interior."""

    def __init__(self, element, side, message):
        super().__init__(message)
        self.element = element
        self.side = side


@dataclass(frozen=True)
class LevelSet:
    """Signed interface description: f < 0 on subdomain 1, f > 0 on 2.

    Both callables must accept numpy arrays; ``grad`` returns a pair
    (df/dx1, df/dx2).
    """

    f: callable
    grad: callable

    def __call__(self, x, y):
        return self.f(x, y)


def line_interface(k, b):
    """Line x2 = k*x1 + b with subdomain 1 below the line."""
    return LevelSet(
        f=lambda x, y: y - k * x - b,
        grad=lambda x, y: (np.full_like(np.asarray(x, dtype=float), -k),
                           np.ones_like(np.asarray(y, dtype=float))),
    )


def circle_interface(r, center=(0.0, 0.0)):
    """Circle of radius r with subdomain 1 inside."""
    cx, cy = center
    return LevelSet(
        f=lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 - r * r,
        grad=lambda x, y: (2.0 * (x - cx), 2.0 * (y - cy)),
    )


class ElementClass(IntEnum):
    INTERIOR_1 = 1
    INTERIOR_2 = 2
    CUT = 3


def snapped_vertex_signs(mesh, levelset):
    """Level-set values and snapped signs (+1 / -1) at all vertices."""
    phi = np.asarray(levelset(mesh.vertices[:, 0], mesh.vertices[:, 1]),
                     dtype=float)
    signs = np.where(phi < 0.0, -1, 1).astype(np.int8)
    signs[np.abs(phi) < SNAP_REL * mesh.h] = 1
    return phi, signs


def _classes_from_signs(mesh, signs):
    s = signs[mesh.triangles]
    classes = np.full(mesh.num_triangles, int(ElementClass.CUT), dtype=np.int8)
    classes[(s == -1).all(axis=1)] = int(ElementClass.INTERIOR_1)
    classes[(s == 1).all(axis=1)] = int(ElementClass.INTERIOR_2)
    return classes


def classify_element(mesh, levelset, element):
    """Classify one element against the (snapped) vertex signs."""
    _, signs = snapped_vertex_signs(mesh, levelset)
    return ElementClass(_classes_from_signs(mesh, signs)[element])


def _edge_root(levelset, pa, pb, fa, fb):
    """Point on segment [pa, pb] where the level set vanishes.

    One secant step first, then bisection on the sign-preserving bracket
    until |phi| <= ROOT_TOL.
    """
    if abs(fa) <= ROOT_TOL:
        return np.array(pa, dtype=float)
    if abs(fb) <= ROOT_TOL:
        return np.array(pb, dtype=float)
    if (fa < 0.0) == (fb < 0.0):
        # no true sign change: one endpoint was snapped across the interface
        snap = np.array(pa, dtype=float) if abs(fa) < abs(fb) else \
            np.array(pb, dtype=float)
        if min(abs(fa), abs(fb)) > 1e-10:
            raise GeometryError("sign-flagged edge without a bracketable root")
        return snap
    ta, tb = 0.0, 1.0
    pa = np.asarray(pa, dtype=float)
    d = np.asarray(pb, dtype=float) - pa

    def eval_t(t):
        p = pa + t * d
        return float(levelset(p[0], p[1]))

    t = ta - fa * (tb - ta) / (fb - fa)      # secant step
    for _ in range(120):
        t = min(max(t, ta), tb)
        ft = eval_t(t)
        if abs(ft) <= ROOT_TOL or tb - ta < 1e-17:
            break
        if (ft < 0.0) == (fa < 0.0):
            ta = t
        else:
            tb = t
        t = 0.5 * (ta + tb)
    return pa + t * d


def _oriented(tri):
    """Return the triangle with positive orientation."""
    e0 = tri[1] - tri[0]
    e1 = tri[2] - tri[0]
    if e0[0] * e1[1] - e0[1] * e1[0] < 0.0:
        return np.array([tri[0], tri[2], tri[1]])
    return np.asarray(tri, dtype=float)


@dataclass
class CutGeometry:
    """Chord, area fractions and sub-triangulation of one cut element.

    ``normal`` is the unit chord normal pointing from subdomain 1 into
    subdomain 2; ``tris1``/``tris2`` are (m, 3, 2) coordinate arrays tiling
    the two element fragments.
    """

    element: int
    q1: np.ndarray
    q2: np.ndarray
    normal: np.ndarray
    k1: float
    k2: float
    tris1: np.ndarray
    tris2: np.ndarray

    @property
    def chord_length(self):
        return float(np.linalg.norm(self.q2 - self.q1))


def compute_cut_geometry(mesh, levelset, element, signs=None):
    """Intersection points, chord normal, area fractions and sub-triangles
    for a cut element."""
    if signs is None:
        _, signs = snapped_vertex_signs(mesh, levelset)
    tri = mesh.triangles[element]
    coords = mesh.vertices[tri]
    s = signs[tri]
    if (s == s[0]).all():
        raise GeometryError(f"element {element} is not cut")

    # minority-sign vertex; its two adjacent edges carry the intersections
    lone = 0 if s[1] == s[2] else (1 if s[0] == s[2] else 2)
    prev_l, next_l = (lone + 2) % 3, (lone + 1) % 3

    phi_at = lambda p: float(levelset(p[0], p[1]))
    roots = {}
    for other in (prev_l, next_l):
        va, vb = tri[lone], tri[other]
        pa, pb = coords[lone], coords[other]
        # canonical edge orientation so shared edges give identical points
        if va > vb:
            pa, pb = pb, pa
        try:
            roots[other] = _edge_root(levelset, pa, pb, phi_at(pa), phi_at(pb))
        except GeometryError as exc:
            raise GeometryError(f"element {element}: {exc}") from None
    q1, q2 = roots[prev_l], roots[next_l]
    if np.linalg.norm(q1 - q2) < 1e-12 * mesh.h:
        # the interface only grazes the minority vertex; the rest of the
        # element lies on the majority side
        majority = 1 if s[prev_l] == -1 else 2
        raise DegenerateCutError(
            element, majority,
            f"element {element}: coincident intersection points")

    lone_tri = _oriented(np.array([coords[lone], q1, q2]))
    quad = [coords[prev_l], coords[next_l], q2, q1]      # ccw cycle
    d_prev_q2 = np.linalg.norm(quad[0] - quad[2])
    d_next_q1 = np.linalg.norm(quad[1] - quad[3])
    if d_prev_q2 <= d_next_q1:
        quad_tris = [np.array([quad[0], quad[1], quad[2]]),
                     np.array([quad[0], quad[2], quad[3]])]
    else:
        quad_tris = [np.array([quad[0], quad[1], quad[3]]),
                     np.array([quad[1], quad[2], quad[3]])]
    area = triangle_area(coords)
    quad_tris = [_oriented(t) for t in quad_tris
                 if triangle_area(t) > 1e-14 * area]

    if s[lone] == -1:
        tris1, tris2 = np.array([lone_tri]), np.array(quad_tris)
    else:
        tris1, tris2 = np.array(quad_tris), np.array([lone_tri])
    k1 = sum(triangle_area(t) for t in tris1) / area
    k2 = sum(triangle_area(t) for t in tris2) / area
    if min(k1, k2) < 1e-12:
        raise DegenerateCutError(
            element, 1 if k1 > k2 else 2,
            f"element {element}: degenerate cut (fractions {k1:.3e}, {k2:.3e})")

    # chord normal pointing out of subdomain 1 (the negative level-set side);
    # this orientation makes the cross-weighted flux data consistent
    mid = 0.5 * (q1 + q2)
    gx, gy = levelset.grad(mid[0], mid[1])
    normal = np.array([float(gx), float(gy)])
    norm = np.linalg.norm(normal)
    if norm == 0.0:
        raise GeometryError(f"element {element}: vanishing level-set gradient")
    normal /= norm

    return CutGeometry(element=element, q1=q1, q2=q2, normal=normal,
                       k1=float(k1), k2=float(k2), tris1=tris1, tris2=tris2)


@dataclass
class CutInfo:
    """Classification of all elements plus geometry of the cut ones."""

    classes: np.ndarray          # (T,) ElementClass values
    vertex_phi: np.ndarray       # (V,) raw level-set values
    vertex_sign: np.ndarray      # (V,) snapped signs
    cut_elements: np.ndarray     # indices of cut elements, increasing
    cuts: dict                   # element -> CutGeometry

    def geometry(self, element):
        return self.cuts[element]


def build_cut_info(mesh, levelset):
    """Classify every element and compute geometry of all cut elements.

    Elements whose chord degenerates (interface grazing a snapped vertex)
    are reclassified as interior.
    """
    phi, signs = snapped_vertex_signs(mesh, levelset)
    classes = _classes_from_signs(mesh, signs)
    cuts = {}
    for e in np.flatnonzero(classes == int(ElementClass.CUT)):
        try:
            cuts[int(e)] = compute_cut_geometry(mesh, levelset, int(e), signs)
        except DegenerateCutError as exc:
            classes[e] = exc.side
    cut_elements = np.array(sorted(cuts), dtype=np.int64)
    return CutInfo(classes=classes, vertex_phi=phi, vertex_sign=signs,
                   cut_elements=cut_elements, cuts=cuts)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass
class QuadRule:
    """Physical quadrature points and weights; weights sum to the measure."""

    points: np.ndarray           # (n, 2)
    weights: np.ndarray          # (n,)


def triangle_rule(degree):
    """Symmetric reference rule in barycentric coordinates.

    Returns (bary (n,3), weights (n,)); weights sum to one and are scaled
    by the physical area on mapping.
    """
    if degree == 2:
        bary = np.array([[0.5, 0.5, 0.0],
                         [0.0, 0.5, 0.5],
                         [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
    elif degree == 4:
        a, b = 0.445948490915965, 0.091576213509771
        wa, wb = 0.223381589678011, 0.109951743655322
        bary = np.array([[1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a],
                         [1 - 2 * b, b, b], [b, 1 - 2 * b, b], [b, b, 1 - 2 * b]])
        w = np.array([wa, wa, wa, wb, wb, wb])
    else:
        raise ConfigurationError(f"unsupported triangle quadrature degree {degree}")
    return bary, w


def map_rule_to_triangle(coords, bary, weights):
    """Map a barycentric rule onto a physical triangle."""
    coords = np.asarray(coords, dtype=float)
    pts = bary @ coords
    return QuadRule(points=pts, weights=weights * triangle_area(coords))


def subtriangle_quadrature(cut, degree):
    """One physical rule per element side, assembled from the sub-triangles."""
    bary, w = triangle_rule(degree)
    rules = []
    for tris in (cut.tris1, cut.tris2):
        pts, wts = [], []
        for t in tris:
            r = map_rule_to_triangle(t, bary, w)
            pts.append(r.points)
            wts.append(r.weights)
        rules.append(QuadRule(points=np.vstack(pts), weights=np.hstack(wts)))
    return rules[0], rules[1]


_GAUSS_CACHE = {}


def gauss_segment(n_points):
    if n_points not in _GAUSS_CACHE:
        x, w = np.polynomial.legendre.leggauss(n_points)
        _GAUSS_CACHE[n_points] = (0.5 * (x + 1.0), 0.5 * w)
    return _GAUSS_CACHE[n_points]


def segment_quadrature(p0, p1, n_points):
    """Gauss-Legendre rule on the segment [p0, p1]; weights sum to its length."""
    if n_points < 2:
        raise ConfigurationError("segment quadrature needs at least 2 points")
    t, w = gauss_segment(n_points)
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    pts = p0 + np.outer(t, d)
    return QuadRule(points=pts, weights=w * np.linalg.norm(d))


def refined_triangle_quadrature(coords, bary, weights, needs_refine,
                                max_depth, collect=None):
    """Composite rule obtained by recursive 4-way midpoint subdivision.

    ``needs_refine(coords)`` decides, per (sub-)triangle, whether to split
    again; leaves receive the base rule.  ``collect`` optionally gathers the
    leaf triangles.
    """
    coords = np.asarray(coords, dtype=float)
    if max_depth <= 0 or not needs_refine(coords):
        if collect is not None:
            collect.append(coords)
        r = map_rule_to_triangle(coords, bary, weights)
        return r.points, r.weights
    m01 = 0.5 * (coords[0] + coords[1])
    m12 = 0.5 * (coords[1] + coords[2])
    m20 = 0.5 * (coords[2] + coords[0])
    pts, wts = [], []
    for child in ([coords[0], m01, m20], [m01, coords[1], m12],
                  [m20, m12, coords[2]], [m01, m12, m20]):
        p, w = refined_triangle_quadrature(np.array(child), bary, weights,
                                           needs_refine, max_depth - 1, collect)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.hstack(wts)


def total_interface_length(cut_info):
    """Sum of chord lengths over all cut elements."""
    return float(sum(cg.chord_length for cg in cut_info.cuts.values()))


def write_integration_mesh_csv(path, mesh, cut_info, extra_tris=()):
    """Dump the integration cells: whole uncut elements, the cut-element
    sub-triangles, and any extra refinement triangles."""
    with open(path, "w") as fh:
        fh.write("element,side,x0,y0,x1,y1,x2,y2\n")

        def emit(e, side, t):
            vals = ",".join(f"{v:.17e}" for v in np.asarray(t).ravel())
            fh.write(f"{e},{side},{vals}\n")

        for e in range(mesh.num_triangles):
            cls = cut_info.classes[e]
            if cls == int(ElementClass.CUT):
                cg = cut_info.cuts[e]
                for t in cg.tris1:
                    emit(e, 1, t)
                for t in cg.tris2:
                    emit(e, 2, t)
            else:
                emit(e, int(cls), mesh.tri_coords(e))
        for e, side, t in extra_tris:
            emit(e, side, t)
