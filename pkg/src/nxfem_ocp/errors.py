"""Error norms of computed optimal triples against the exact fields.

All integrals are evaluated side by side: on cut elements the exact
per-subdomain formulas are integrated over the matching sub-triangles of
the chord-based geometry.  The mesh-dependent norm augments the broken H1
seminorm with the h-weighted interface terms (average normal derivative
scaled by h_T, jump scaled by 1/h_T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interface_geometry import (refined_triangle_quadrature,
                                 segment_quadrature, triangle_rule)

__all__ = ["FieldErrors", "ErrorReport", "compute_errors"]

FIELDS = ("u", "y", "p")
NORMS = ("l2", "h1", "triple")


@dataclass
class FieldErrors:
    l2: float
    h1: float
    triple: float
    exact_l2: float
    exact_h1: float
    exact_triple: float

    def value(self, norm, relative):
        err = getattr(self, norm)
        if not relative:
            return err
        ref = getattr(self, f"exact_{norm}")
        return err / ref if ref > 0.0 else err


@dataclass
class ErrorReport:
    fields: dict
    relative: bool

    def value(self, field, norm):
        return self.fields[field].value(norm, self.relative)


class _ClampedLinearField:
    """Discrete field representable as clip(C . lambda, lo, hi) per side."""

    def __init__(self, space, coeff_vec, scale, bounds):
        self.space = space
        self.vec = coeff_vec
        self.scale = scale
        self.lo, self.hi = (-np.inf, np.inf) if bounds is None else bounds

    def coeffs(self, dofs):
        return self.scale * self.vec[dofs]

    def values_and_grads(self, mesh, e, side, lam_pts):
        """Values (n,) and gradients (n, 2) at points given in barycentric
        coordinates of element e."""
        C = self.coeffs(self.space.element_dofs(e, side))
        raw = lam_pts @ C
        vals = np.clip(raw, self.lo, self.hi)
        active = (raw > self.lo) & (raw < self.hi)
        g = C @ mesh.grad_bary[e]
        return vals, active[:, None] * g[None, :]

    def status_varies(self, dofs_matrix):
        """Per-element flag: does the clamp switch inside the element?"""
        if not np.isfinite([self.lo, self.hi]).any():
            return None
        raw = self.scale * self.vec[dofs_matrix]
        vmin, vmax = raw.min(axis=1), raw.max(axis=1)
        return (((vmin < self.lo) & (self.lo < vmax))
                | ((vmin < self.hi) & (self.hi < vmax)))


def _element_diameters(mesh, elements):
    coords = mesh.vertices[mesh.triangles[elements]]
    edges = coords - np.roll(coords, 1, axis=1)
    return np.sqrt((edges ** 2).sum(axis=2)).max(axis=1)


def _accumulate(acc, w, err_vals, err_grads, exact_vals, exact_grads):
    acc[0] += np.sum(w * err_vals ** 2)
    acc[1] += np.sum(w * (err_grads ** 2).sum(axis=-1))
    acc[2] += np.sum(w * exact_vals ** 2)
    acc[3] += np.sum(w * (exact_grads ** 2).sum(axis=-1))


def _field_errors(problem, field, disc, mesh, cut_info, space, quad_degree,
                  seg_points, refine_depth):
    exact = getattr(problem, field)
    exact_grad = getattr(problem, f"grad_{field}")
    bary, w = triangle_rule(quad_degree)
    acc = [0.0, 0.0, 0.0, 0.0]          # err_l2^2, err_h1^2, exact versions

    exact_status = None
    if field == "u" and problem.bounds is not None:
        def exact_status(side, pts):
            return problem.clamp_status(
                problem.control_arg.side(side)(pts[:, 0], pts[:, 1]))

    # --- volume terms, uncut elements -------------------------------------
    for side in (1, 2):
        els = np.flatnonzero(cut_info.classes == side)
        if len(els) == 0:
            continue
        dmap = space.dof1 if side == 1 else space.dof2
        dofs = dmap[mesh.triangles[els]]
        varies = disc.status_varies(dofs)
        if varies is None:
            varies = np.zeros(len(els), dtype=bool)
        if exact_status is not None:
            coords = mesh.vertices[mesh.triangles[els]]
            st = exact_status(side, coords.reshape(-1, 2)).reshape(len(els), 3)
            varies |= st.max(axis=1) != st.min(axis=1)

        plain = els[~varies]
        if len(plain):
            C = disc.coeffs(dmap[mesh.triangles[plain]])
            coords = mesh.vertices[mesh.triangles[plain]]
            pts = np.einsum("qi,eik->eqk", bary, coords)
            ev = exact.side(side)(pts[..., 0], pts[..., 1])
            egx, egy = exact_grad.side(side)(pts[..., 0], pts[..., 1])
            raw = C @ bary.T
            dv = np.clip(raw, disc.lo, disc.hi)
            active = (raw > disc.lo) & (raw < disc.hi)
            dg = np.einsum("ei,eid->ed", C, mesh.grad_bary[plain])
            wa = np.outer(mesh.areas[plain], w)
            acc[0] += np.sum(wa * (ev - dv) ** 2)
            acc[1] += np.sum(wa * ((egx - active * dg[:, None, 0]) ** 2
                                   + (egy - active * dg[:, None, 1]) ** 2))
            acc[2] += np.sum(wa * ev ** 2)
            acc[3] += np.sum(wa * (egx ** 2 + egy ** 2))
        for e in els[varies]:
            _element_volume(acc, problem, exact, exact_grad, exact_status,
                            disc, mesh, int(e), side,
                            [mesh.tri_coords(int(e))], bary, w, refine_depth)

    # --- volume terms, cut elements ----------------------------------------
    for e in cut_info.cut_elements:
        cg = cut_info.cuts[int(e)]
        for side, tris in ((1, cg.tris1), (2, cg.tris2)):
            _element_volume(acc, problem, exact, exact_grad, exact_status,
                            disc, mesh, int(e), side, tris, bary, w,
                            refine_depth)

    # --- interface terms of the mesh-dependent norm ------------------------
    iface_err = 0.0
    iface_exact = 0.0
    if len(cut_info.cut_elements):
        h_T = _element_diameters(mesh, cut_info.cut_elements)
        for ht, e in zip(h_T, cut_info.cut_elements):
            cg = cut_info.cuts[int(e)]
            rule = segment_quadrature(cg.q1, cg.q2, seg_points)
            lam = mesh.barycentric(int(e), rule.points)
            n = cg.normal
            ev, eg, dv, dg = {}, {}, {}, {}
            for side in (1, 2):
                ev[side] = exact.side(side)(rule.points[:, 0], rule.points[:, 1])
                gx, gy = exact_grad.side(side)(rule.points[:, 0],
                                               rule.points[:, 1])
                eg[side] = gx * n[0] + gy * n[1]
                vals, grads = disc.values_and_grads(mesh, int(e), side, lam)
                dv[side] = vals
                dg[side] = grads @ n
            jump_err = (ev[1] - dv[1]) - (ev[2] - dv[2])
            avg_err = cg.k1 * (eg[1] - dg[1]) + cg.k2 * (eg[2] - dg[2])
            jump_ex = ev[1] - ev[2]
            avg_ex = cg.k1 * eg[1] + cg.k2 * eg[2]
            iface_err += ht * np.sum(rule.weights * avg_err ** 2) \
                + np.sum(rule.weights * jump_err ** 2) / ht
            iface_exact += ht * np.sum(rule.weights * avg_ex ** 2) \
                + np.sum(rule.weights * jump_ex ** 2) / ht

    return FieldErrors(
        l2=np.sqrt(acc[0]), h1=np.sqrt(acc[1]),
        triple=np.sqrt(acc[1] + iface_err),
        exact_l2=np.sqrt(acc[2]), exact_h1=np.sqrt(acc[3]),
        exact_triple=np.sqrt(acc[3] + iface_exact))


def _element_volume(acc, problem, exact, exact_grad, exact_status, disc,
                    mesh, e, side, tris, bary, w, depth):
    """Slow path: per-element integration with kink-adaptive refinement."""
    dofs = disc.space.element_dofs(e, side)
    C = disc.coeffs(dofs)

    def needs_refine(tc):
        raw = mesh.barycentric(e, tc) @ C
        if (raw.min() < disc.lo < raw.max()) or (raw.min() < disc.hi < raw.max()):
            return True
        if exact_status is not None:
            pts = np.vstack([tc, 0.5 * (tc + np.roll(tc, 1, axis=0)),
                             tc.mean(axis=0)])
            st = exact_status(side, pts)
            return st.max() != st.min()
        return False

    for t in tris:
        pts, wts = refined_triangle_quadrature(t, bary, w, needs_refine, depth)
        lam = mesh.barycentric(e, pts)
        ev = exact.side(side)(pts[:, 0], pts[:, 1])
        egx, egy = exact_grad.side(side)(pts[:, 0], pts[:, 1])
        dv, dg = disc.values_and_grads(mesh, e, side, lam)
        err_g = np.column_stack([egx, egy]) - dg
        ex_g = np.column_stack([egx, egy])
        _accumulate(acc, wts, ev - dv, err_g, ev, ex_g)


def compute_errors(problem, solution, mesh, cut_info, space, quad_degree=4,
                   seg_points=3, refine_depth=3):
    """L2, broken H1 and mesh-dependent norms of the control/state/co-state
    errors, plus the matching exact-field norms for relative reporting."""
    bounds = problem.bounds
    specs = {
        "u": _ClampedLinearField(space, solution.P, -1.0 / problem.a, bounds),
        "y": _ClampedLinearField(space, solution.Y, 1.0, None),
        "p": _ClampedLinearField(space, solution.P, 1.0, None),
    }
    fields = {name: _field_errors(problem, name, disc, mesh, cut_info, space,
                                  quad_degree, seg_points, refine_depth)
              for name, disc in specs.items()}
    return ErrorReport(fields=fields, relative=problem.relative_errors)
