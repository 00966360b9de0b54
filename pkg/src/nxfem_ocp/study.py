"""End-to-end pipeline: discretize a benchmark, solve, measure errors,
tabulate refinement orders, extract active-set boundaries.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_load, assemble_mass, assemble_stiffness
from .errors import compute_errors, FIELDS, NORMS
from .interface_geometry import (ElementClass, build_cut_info,
                                 write_integration_mesh_csv)
from .mesh import ConfigurationError, build_uniform_mesh, write_mesh_csv
from .problems import PiecewiseField, build_example
from .solver import (LinearSolverConfig, solve_constrained_fixed_point,
                     solve_unconstrained_ocp)
from .xfem_space import build_extended_space

__all__ = ["RunConfig", "Discretization", "discretize", "solve_discretized",
           "run_convergence_study", "StudyResult", "extract_active_set_boundary",
           "interface_polylines", "write_errors_csv", "write_activeset_csv",
           "format_table"]


@dataclass
class RunConfig:
    example: int
    n_values: tuple
    lambda_coef: float | None = None
    a: float | None = None
    bounds: object = "default"            # "default", None, or (lo, hi)
    solver: str = "direct"
    tol: float = 1e-10
    max_iter: int = 200
    out_dir: str | None = None
    dump_geometry: bool = False
    verbose: bool = False

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        if len(ns) == 0 or any(n < 4 for n in ns):
            raise ConfigurationError("mesh sizes must be >= 4")
        if any(b >= a for a, b in zip(ns[1:], ns)):
            raise ConfigurationError("mesh sizes must be strictly increasing")
        self.n_values = ns

    def build_problem(self):
        problem = build_example(self.example)
        if self.lambda_coef is not None:
            problem.lambda_coef = float(self.lambda_coef)
        if self.a is not None:
            problem.a = float(self.a)
        if self.bounds != "default":
            problem.bounds = self.bounds
        return problem


@dataclass
class Discretization:
    mesh: object
    cut_info: object
    space: object
    A: object
    M: object
    F1: np.ndarray
    F2: np.ndarray
    ybc_values: np.ndarray


def discretize(problem, n, quad_degree=4, seg_points=3):
    """Mesh, cut geometry, extended space, matrices and base loads."""
    mesh = build_uniform_mesh(problem.domain, n)
    cut_info = build_cut_info(mesh, problem.levelset)
    space = build_extended_space(mesh, cut_info)
    params = problem.nitsche_params()
    A = assemble_stiffness(mesh, cut_info, space, problem.alpha1,
                           problem.alpha2, params, quad_degree, seg_points)
    M = assemble_mass(mesh, cut_info, space, quad_degree)
    refine = problem.load_refine(mesh, cut_info)
    F1 = assemble_load(mesh, cut_info, space, f=problem.f, g=problem.g,
                       quad_degree=quad_degree, seg_points=seg_points,
                       refine=refine)
    neg_yd = PiecewiseField(
        lambda x, y: -problem.y_d.side(1)(x, y),
        lambda x, y: -problem.y_d.side(2)(x, y))
    F2 = assemble_load(mesh, cut_info, space, f=neg_yd, g=problem.g_adj,
                       quad_degree=quad_degree, seg_points=seg_points)
    _, ybc = space.boundary_values(problem.y)
    return Discretization(mesh=mesh, cut_info=cut_info, space=space, A=A,
                          M=M, F1=F1, F2=F2, ybc_values=ybc)


def solve_discretized(problem, disc, solver="direct", tol=1e-10, max_iter=200,
                      log=None):
    """Dispatch to the block solve (no bounds) or the projected fixed-point
    iteration (box constraints).  The saddle block solve is always direct;
    the solver choice selects the inner SPD solves of the iteration."""
    if problem.bounds is None:
        return solve_unconstrained_ocp(disc.A, disc.M, disc.F1, disc.F2,
                                       problem.a, disc.space.dirichlet_dofs,
                                       disc.ybc_values)
    config = LinearSolverConfig(method=solver)
    return solve_constrained_fixed_point(
        disc.mesh, disc.cut_info, disc.space, disc.A, disc.M, disc.F1,
        disc.F2, problem.a, problem.bounds, disc.ybc_values, tol=tol,
        max_iter=max_iter, config=config, log=log)


@dataclass
class StudyResult:
    problem: object
    n_values: tuple
    reports: list
    solutions: list
    eoc: dict = field(default_factory=dict)

    def error(self, i, fld, norm):
        return self.reports[i].value(fld, norm)

    def compute_eoc(self):
        for fld in FIELDS:
            for norm in NORMS:
                vals = [None]
                for i in range(1, len(self.reports)):
                    e0 = self.error(i - 1, fld, norm)
                    e1 = self.error(i, fld, norm)
                    vals.append(np.log2(e0 / e1) if e1 > 0 else np.nan)
                self.eoc[(fld, norm)] = vals
        return self


def run_convergence_study(config):
    """Solve the configured benchmark on every mesh in the sweep and collect
    errors and refinement orders.  Output files are flushed row by row, so
    a failing fine-mesh solve leaves the coarse rows on disk."""
    problem = config.build_problem()
    result = StudyResult(problem=problem, n_values=config.n_values,
                         reports=[], solutions=[])
    out = config.out_dir
    if out:
        os.makedirs(out, exist_ok=True)
    try:
        for n in config.n_values:
            disc = discretize(problem, n)
            log = [] if config.verbose else None
            sol = solve_discretized(problem, disc, solver=config.solver,
                                    tol=config.tol, max_iter=config.max_iter,
                                    log=log)
            report = compute_errors(problem, sol, disc.mesh, disc.cut_info,
                                    disc.space)
            result.reports.append(report)
            result.solutions.append(sol)
            result.compute_eoc()
            if out:
                _write_outputs(config, problem, result, disc, sol, n, log)
    except Exception:
        if out and result.reports:
            write_errors_csv(os.path.join(out, "errors.csv"), result)
        raise
    return result


def _write_outputs(config, problem, result, disc, sol, n, log):
    out = config.out_dir
    write_errors_csv(os.path.join(out, "errors.csv"), result)
    with open(os.path.join(out, "table.txt"), "w") as fh:
        fh.write(format_table(result))
    if problem.bounds is not None:
        curves = extract_active_set_boundary(sol, problem.a, problem.bounds,
                                             disc.mesh, disc.cut_info,
                                             disc.space)
        curves["interface"] = interface_polylines(disc.cut_info)
        for name in (f"activeset_n{n}.csv", "activeset.csv"):
            write_activeset_csv(os.path.join(out, name), curves)
    if config.dump_geometry:
        write_mesh_csv(disc.mesh,
                       os.path.join(out, f"mesh_vertices_n{n}.csv"),
                       os.path.join(out, f"mesh_triangles_n{n}.csv"))
        extra = []
        if problem.bounds is not None:
            from .solver import _control_load
            _control_load(disc.mesh, disc.cut_info, disc.space, sol.P,
                          problem.a, problem.bounds, collect=extra)
        for name in (f"integration_mesh_n{n}.csv", "integration_mesh.csv"):
            write_integration_mesh_csv(os.path.join(out, name),
                                       disc.mesh, disc.cut_info, extra)
    if log is not None:
        with open(os.path.join(out, f"iterations_n{n}.csv"), "w") as fh:
            fh.write("iteration,control_diff,residual_state,residual_costate\n")
            for it, diff, r1, r2 in log:
                fh.write(f"{it},{diff:.17e},{r1:.17e},{r2:.17e}\n")


def write_errors_csv(path, result):
    with open(path, "w") as fh:
        fh.write("N,field,norm,error,eoc\n")
        for i, n in enumerate(result.n_values[:len(result.reports)]):
            for fld in FIELDS:
                for norm in NORMS:
                    err = result.error(i, fld, norm)
                    eoc = result.eoc.get((fld, norm), [None] * (i + 1))[i] \
                        if i > 0 else None
                    eoc_s = "" if eoc is None or not np.isfinite(eoc) \
                        else f"{eoc:.4f}"
                    fh.write(f"{n},{fld},{norm},{err:.17e},{eoc_s}\n")


def format_table(result):
    """Aligned text table, one section per norm, matching the benchmark
    table layout (error and order per field)."""
    lines = []
    rel = "relative" if result.problem.relative_errors else "absolute"
    for norm, title in (("l2", "L2 errors"), ("h1", "H1 seminorm errors"),
                        ("triple", "mesh-dependent norm errors")):
        lines.append(f"{result.problem.name}: {title} ({rel})")
        header = f"{'N':>5}"
        for fld in FIELDS:
            header += f" {fld + '-error':>13} {'order':>6}"
        lines.append(header)
        for i, n in enumerate(result.n_values[:len(result.reports)]):
            row = f"{n:>5}"
            for fld in FIELDS:
                err = result.error(i, fld, norm)
                eoc = result.eoc.get((fld, norm), [None] * (i + 1))[i] \
                    if i > 0 else None
                eoc_s = "" if eoc is None or not np.isfinite(eoc) \
                    else f"{eoc:.2f}"
                row += f" {err:13.4e} {eoc_s:>6}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# active-set boundary extraction
# ---------------------------------------------------------------------------

def _triangle_contour(coords, vals):
    """Zero-level segment of a linear function on one triangle, or None."""
    pts = []
    for i in range(3):
        j = (i + 1) % 3
        vi, vj = vals[i], vals[j]
        if vi * vj < 0.0:
            t = vi / (vi - vj)
            pts.append(coords[i] + t * (coords[j] - coords[i]))
    if len(pts) == 2:
        return np.array(pts)
    return None


def _chain_segments(segments, decimals=9):
    """Greedily join segments sharing endpoints into polylines."""
    if not segments:
        return []
    key = lambda p: (round(p[0], decimals), round(p[1], decimals))
    adj = {}
    for si, seg in enumerate(segments):
        for end in (0, 1):
            adj.setdefault(key(seg[end]), []).append((si, end))
    used = [False] * len(segments)
    polylines = []
    for si in range(len(segments)):
        if used[si]:
            continue
        used[si] = True
        chain = [segments[si][0], segments[si][1]]
        for grow_end in (1, 0):
            while True:
                k = key(chain[-1] if grow_end else chain[0])
                nxt = [(sj, e) for sj, e in adj.get(k, []) if not used[sj]]
                if not nxt:
                    break
                sj, e = nxt[0]
                used[sj] = True
                new_pt = segments[sj][1 - e]
                if grow_end:
                    chain.append(new_pt)
                else:
                    chain.insert(0, new_pt)
        polylines.append(np.array(chain))
    return polylines


def extract_active_set_boundary(solution, a, bounds, mesh, cut_info, space):
    """Contours where the clamped control hits each finite bound, as chained
    polylines keyed 'lower' / 'upper'."""
    lo, hi = bounds
    curves = {}
    for name, level in (("lower", lo), ("upper", hi)):
        if not np.isfinite(level):
            curves[name] = []
            continue
        segments = []
        for e in range(mesh.num_triangles):
            cls = int(cut_info.classes[e])
            patches = []
            if cls == int(ElementClass.CUT):
                cg = cut_info.cuts[e]
                patches = [(1, t) for t in cg.tris1] + [(2, t) for t in cg.tris2]
            else:
                patches = [(cls, mesh.tri_coords(e))]
            for side, tri in patches:
                dofs = space.element_dofs(e, side)
                coeffs = -solution.P[dofs] / a
                vals = mesh.barycentric(e, tri) @ coeffs - level
                seg = _triangle_contour(np.asarray(tri), vals)
                if seg is not None:
                    segments.append(seg)
        curves[name] = _chain_segments(segments)
    return curves


def interface_polylines(cut_info):
    """The chord train of the discretized interface as polylines."""
    segments = [np.array([cg.q1, cg.q2]) for cg in cut_info.cuts.values()]
    return _chain_segments(segments)


def write_activeset_csv(path, curves):
    with open(path, "w") as fh:
        fh.write("curve_id,x,y\n")
        for name in sorted(curves):
            for i, poly in enumerate(curves[name]):
                for x, y in poly:
                    fh.write(f"{name}_{i},{x:.17e},{y:.17e}\n")
