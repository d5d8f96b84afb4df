"""Convergence studies and measure verification for catalogue problems.

run_convergence_study solves a problem over its mesh levels, measures
broken-H2 / L2 / sup errors against the exact solution (the sup norm on a
fixed interior compact, where uniform convergence is the meaningful
statement for non-smooth limits), reports log2 error ratios between
consecutive levels, and serializes everything to JSON and CSV with full
float precision.  run_measure_verification pairs the cellwise determinant
of a solution against interior test bumps and the data density.
"""

import csv
import io
import json
import time

import numpy as np

from . import ma_measure
from .convexity import analyze
from .errors import NonConvergenceError
from .fespace import (FeFunction, FeSpace, Quadrature, broken_error_h2,
                      eval_field, l2_error, phys_quad_points)
from .mesh import triangulate
from .regularize import truncate
from .solver import SolverConfig, continuation_solve


def interior_grid(compact, n=33):
    """Deterministic lattice over the compact's bounding box, clipped.

    The same fixed point set is used at every mesh level so sup-norm
    errors are comparable across levels.
    """
    lo = compact.vertices.min(axis=0)
    hi = compact.vertices.max(axis=0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    pts = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    return pts[compact.contains(pts)]


def _fmt(x):
    return "%.17g" % float(x)


class StudyReport:
    """Per-level errors, rates and solver/convexity records of a study."""

    def __init__(self, problem_name, degree):
        self.problem_name = problem_name
        self.degree = degree
        self.levels = []
        self.failures = []

    def add_level(self, record):
        self.levels.append(record)

    def add_failure(self, level, message):
        self.failures.append({"level": int(level), "message": str(message)})

    def rates(self, key="err_h2_broken"):
        """log error ratios between consecutive successful levels."""
        out = [None]
        for prev, cur in zip(self.levels, self.levels[1:]):
            e0, e1 = prev.get(key), cur.get(key)
            if not e0 or not e1 or e0 <= 0 or e1 <= 0:
                out.append(None)
                continue
            out.append(float(np.log(e0 / e1)
                             / np.log(prev["h"] / cur["h"])))
        return out

    def to_dict(self):
        return {
            "problem": self.problem_name,
            "degree": self.degree,
            "levels": self.levels,
            "rates_h2": self.rates("err_h2_broken"),
            "rates_linf_interior": self.rates("err_linf_interior"),
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def csv_text(self):
        """CSV table: level,h,dofs,err_h2_broken,err_linf_interior,rate_h2."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level", "h", "dofs", "err_h2_broken",
                         "err_linf_interior", "rate_h2"])
        rates = self.rates("err_h2_broken")
        for rec, rate in zip(self.levels, rates):
            writer.writerow([
                rec["level"], _fmt(rec["h"]), rec["dofs"],
                _fmt(rec["err_h2_broken"]) if rec["err_h2_broken"]
                is not None else "",
                _fmt(rec["err_linf_interior"]),
                _fmt(rate) if rate is not None else "",
            ])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.csv_text())


def solve_problem(problem, refinements=None, h_target=None, u0=None,
                  config=None):
    """One solve of a catalogue problem at a given mesh resolution.

    Runs the truncation schedule (for unbounded data) as an outer
    warm-started loop around the shift-continuation solve.  Returns
    (solution, space, list of solve report dicts).
    """
    mesh = triangulate(problem.polygon, refinements=refinements,
                       h_target=h_target)
    space = FeSpace(mesh, problem.degree)
    if config is None:
        config = SolverConfig(
            continuation_schedule=problem.epsilon_schedule)
    reports = []
    u = u0
    stages = problem.truncate_schedule or (None,)
    for M in stages:
        reg = problem.regularized(truncate_M=M)
        try:
            u, rep = continuation_solve(space, reg.f_m,
                                        problem.solve_boundary,
                                        config=config, u0=u)
        except NonConvergenceError:
            # A warm start from an earlier stage can sit too far from the
            # large-shift solution at the head of the schedule; retry cold.
            if u is None:
                raise
            u, rep = continuation_solve(space, reg.f_m,
                                        problem.solve_boundary,
                                        config=config, u0=None)
        rec = rep.to_dict()
        rec["truncate_M"] = M
        reports.append(rec)
    return u, space, reports


def _prolong(u_coarse, space, problem):
    """Initial guess on a finer space from a coarser solution."""
    u = FeFunction(space, u_coarse(space.dof_coords))
    u.coeffs[space.boundary_dofs] = eval_field(
        problem.solve_boundary, space.dof_coords[space.boundary_dofs])
    return u


def level_errors(u, space, problem, grid):
    """Error record of one solved level against the exact fields."""
    rec = {"err_h2_broken": None, "err_l2": None,
           "err_linf_interior": None}
    if problem.exact is None:
        return rec
    rec["err_l2"] = l2_error(u, problem.exact)
    if problem.exact_hess is not None:
        rec["err_h2_broken"] = broken_error_h2(
            u, problem.exact, problem.exact_grad, problem.exact_hess)
    exact_vals = np.asarray(eval_field(problem.exact, grid), dtype=float)
    rec["err_linf_interior"] = float(
        np.max(np.abs(u(grid) - exact_vals)))
    return rec


def run_convergence_study(problem, levels=None, grid_n=33,
                          with_measure=False):
    """Solve across mesh levels and report errors and observed rates.

    A failing level is recorded in the report and the study continues
    cold-started on the remaining levels.
    """
    levels = problem.levels if levels is None else tuple(levels)
    compact = problem.interior_compact()
    grid = interior_grid(compact, n=grid_n)
    report = StudyReport(problem.name, problem.degree)
    u_prev = None
    for level in levels:
        t0 = time.perf_counter()
        try:
            mesh = triangulate(problem.polygon, refinements=level)
            space = FeSpace(mesh, problem.degree)
            u0 = _prolong(u_prev, space, problem) if u_prev is not None \
                else None
            u, space, solve_reports = solve_problem(problem, level, u0=u0)
        except NonConvergenceError as exc:
            report.add_failure(level, exc)
            u_prev = None
            continue
        rec = {"level": int(level), "h": float(space.mesh.mesh_size()),
               "dofs": int(space.num_dofs),
               "elapsed": time.perf_counter() - t0}
        rec.update(level_errors(u, space, problem, grid))
        rec["solves"] = solve_reports
        rec["convexity"] = analyze(u).to_dict()
        if with_measure:
            rec["measure_residuals"] = run_measure_verification(
                problem, u)["residuals"]
        report.add_level(rec)
        u_prev = u
    return report


def default_bumps(compact):
    """Three fixed smooth bumps compactly supported inside the domain."""
    lo = compact.vertices.min(axis=0)
    hi = compact.vertices.max(axis=0)
    centers = [0.5 * (lo + hi),
               lo + 0.3 * (hi - lo),
               lo + np.array([0.7, 0.4]) * (hi - lo)]
    radius = 0.25 * min(hi - lo)

    def make(c):
        def p(x):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            r2 = ((x[:, 0] - c[0]) ** 2 + (x[:, 1] - c[1]) ** 2) / radius ** 2
            out = np.zeros(len(x))
            m = r2 < 1.0
            out[m] = np.exp(-1.0 / (1.0 - r2[m]) + 1.0)
            return out
        return p
    return [make(c) for c in centers]


def run_measure_verification(problem, u, bumps=None, quad=None):
    """Residuals |int p d(det D2u) - int f p dx| for interior test bumps.

    The bumps must be supported strictly inside the domain; under mesh
    refinement these residuals are the desk-scale form of weak convergence
    of the discrete Monge-Ampere measures to f dx.
    """
    space = u.space
    if bumps is None:
        bumps = default_bumps(problem.interior_compact())
    if quad is None:
        quad = Quadrature(2 * space.degree + 2)
    pts = phys_quad_points(space, quad).reshape(-1, 2)
    fv = np.asarray(eval_field(problem.f, pts), dtype=float).reshape(
        space.mesh.num_cells, quad.num_points)
    residuals = []
    for p in bumps:
        ma_measure.check_interior_support(u, p)
        pv = np.asarray(eval_field(p, pts), dtype=float).reshape(fv.shape)
        target = float(np.sum(space.cell_areas * ((fv * pv) @ quad.weights)))
        pairing = ma_measure.measure_pairing(u, p, quad=quad)
        residuals.append(abs(pairing - target))
    return {"problem": problem.name, "dofs": int(space.num_dofs),
            "h": float(space.mesh.mesh_size()), "residuals": residuals}
