"""End-to-end acceptance gates for the solver and verification toolkit.

One test per gate, each with pinned tolerances: convergence rates of the
solver on manufactured problems, exactness of the assembled linearization,
local uniqueness of Newton reconvergence, the Monge-Ampere measure oracles
(cones, partial measures, weak convergence), the regularization pathways
for degenerate and unbounded data, the convex-envelope boundary oracle and
the Aleksandrov maximum-principle diagnostic.
"""

import time

import numpy as np
import pytest

from mafem.assembly import fd_jacobian, jacobian, linearized_operator_check
from mafem.convexity import analyze, strictify
from mafem.fespace import (FeFunction, FeSpace, Quadrature, broken_error_h2,
                           interpolate, phys_quad_points)
from mafem.geometry import ConvexPolygon
from mafem.mesh import (Mesh, regular_polygon, triangulate, unit_square)
from mafem.problems import get_problem
from mafem.regularize import shift
from mafem.solver import SolverConfig, continuation_solve, newton_solve
from mafem.study import default_bumps, interior_grid, solve_problem, _prolong
from mafem import ma_measure as mm


def two_cell_mesh():
    verts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    return Mesh(verts, [[0, 1, 2], [0, 2, 3]],
                [[0, 1], [1, 2], [2, 3], [3, 0]], [0, 1, 2, 3])


def fan_cone(N, rim_value):
    """P1 cone on the fan of a regular N-gon: rim_value at rim, 0 at apex."""
    fan = triangulate(regular_polygon(N), refinements=0)
    vals = np.full(fan.num_vertices, float(rim_value))
    vals[N] = 0.0
    return mm.P1Function(fan, vals)


@pytest.fixture(scope="module")
def smooth_problem():
    return get_problem("smooth")


@pytest.fixture(scope="module")
def smooth_study(smooth_problem):
    """Warm-started solves at h = 1/4 ... 1/32, k = 2, with errors."""
    compact = ConvexPolygon(np.array([[0.2, 0.2], [0.8, 0.2],
                                      [0.8, 0.8], [0.2, 0.8]]))
    grid = interior_grid(compact)
    t0 = time.perf_counter()
    hs, e2s, eis = [], [], []
    u_prev = None
    for level in (2, 3, 4, 5):
        space = FeSpace(triangulate(smooth_problem.polygon,
                                    refinements=level), 2)
        u0 = (_prolong(u_prev, space, smooth_problem)
              if u_prev is not None else None)
        u, space, reports = solve_problem(smooth_problem, refinements=level,
                                          u0=u0)
        assert all(rep["converged"] for rep in reports)
        hs.append(space.mesh.mesh_size())
        e2s.append(broken_error_h2(u, smooth_problem.exact,
                                   smooth_problem.exact_grad,
                                   smooth_problem.exact_hess))
        eis.append(float(np.max(np.abs(u(grid)
                                       - smooth_problem.exact(grid)))))
        u_prev = u
    return {"h": hs, "err_h2": e2s, "err_inf": eis,
            "elapsed": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def smooth_solution(smooth_problem):
    """Converged strictly convex solution at h = 1/8, k = 2."""
    space = FeSpace(triangulate(smooth_problem.polygon, refinements=3), 2)
    u, report = newton_solve(space, smooth_problem.f, smooth_problem.g)
    assert report.converged
    return u


def test_01_broken_h2_convergence_rate(smooth_study):
    slope = np.polyfit(np.log(smooth_study["h"]),
                       np.log(smooth_study["err_h2"]), 1)[0]
    assert slope >= 0.85
    assert smooth_study["elapsed"] < 120.0


def test_02_uniform_interior_convergence(smooth_study):
    errs = smooth_study["err_inf"]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-3


def test_03_jacobian_matches_difference_quotients():
    meshes = [two_cell_mesh(), triangulate(unit_square(), refinements=0),
              triangulate(unit_square(), refinements=1),
              triangulate(unit_square(), refinements=2)]
    configs = [(m, k) for m in meshes for k in (2, 3)]
    ones = lambda p: np.ones(len(np.atleast_2d(p)))
    rng = np.random.default_rng(0)
    for trial in range(20):
        mesh, k = configs[trial % len(configs)]
        space = FeSpace(mesh, k)
        u = FeFunction(space, rng.standard_normal(space.num_dofs))
        J = jacobian(u).toarray()
        rel = np.max(np.abs(J - fd_jacobian(u, ones))) / np.max(np.abs(J))
        assert rel <= 1e-6


def test_04_newton_reconverges_from_perturbations(smooth_problem,
                                                  smooth_solution):
    u_star = smooth_solution
    space = u_star.space
    rng = np.random.default_rng(0)
    for trial in range(10):
        pert = u_star.copy()
        pert.coeffs[space.interior_dofs] += 1e-4 * rng.standard_normal(
            len(space.interior_dofs))
        # cellwise convexity holds along the whole start segment
        lam_seg = min(analyze(FeFunction(
            space, (1.0 - t) * u_star.coeffs + t * pert.coeffs)
            ).global_min_lambda1 for t in np.linspace(0.0, 1.0, 5))
        assert lam_seg > 0.0
        u_re, report = newton_solve(space, smooth_problem.f,
                                    smooth_problem.g, u0=pert)
        assert report.converged
        assert np.max(np.abs(u_re.coeffs - u_star.coeffs)) <= 1e-8


def test_05_linearized_operator_identity():
    space = FeSpace(triangulate(unit_square(), refinements=2), 2)
    scale = 0.25 * space.mesh.mesh_size() ** 2
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = FeFunction(space, scale * rng.standard_normal(space.num_dofs))
        w = FeFunction(space, scale * rng.standard_normal(space.num_dofs))
        assert linearized_operator_check(u, w) <= 1e-12


def test_06_strictify_shifts_spectrum_by_two_eps(smooth_problem):
    space = FeSpace(triangulate(unit_square(), refinements=2), 2)
    u = interpolate(space, smooth_problem.exact)
    lam0 = analyze(u).global_min_lambda1
    for eps in (1e-3, 1e-6, 1e-9):
        lam = analyze(strictify(u, eps)).global_min_lambda1
        assert abs(lam - lam0 - 2.0 * eps) <= 1e-12


def test_07_cone_subdifferential_atoms():
    # rim value cos(pi/N) makes every fan-cell gradient a unit vector, so
    # the apex atom is the area of the inscribed regular N-gon of the disc
    atoms = []
    for N in (8, 16, 32):
        cone = fan_cone(N, np.cos(np.pi / N))
        atom = mm.subdifferential_p1(cone, N).area
        assert abs(atom - 0.5 * N * np.sin(2.0 * np.pi / N)) <= 1e-10
        atoms.append(atom)
    assert atoms[0] < atoms[1] < atoms[2] < np.pi


def test_08_partial_measure_of_paraboloid_is_area():
    space = FeSpace(triangulate(unit_square(), refinements=2), 2)
    u = interpolate(space, lambda p: 0.5 * (p[..., 0] ** 2
                                            + p[..., 1] ** 2))
    rng = np.random.default_rng(1)
    for _ in range(5):
        lo = rng.uniform(0.05, 0.55, size=2)
        side = rng.uniform(0.1, 0.35)
        region = ConvexPolygon(np.array([lo, lo + [side, 0.0],
                                         lo + side, lo + [0.0, side]]))
        got = mm.partial_ma_measure(u, region)
        assert abs(got - side * side) <= 1e-10


def test_09_weak_convergence_of_measures(smooth_problem):
    limit = interpolate(FeSpace(triangulate(unit_square(), refinements=6),
                                2), smooth_problem.exact)
    seq = [interpolate(FeSpace(triangulate(unit_square(), refinements=r),
                               2), smooth_problem.exact)
           for r in (2, 3, 4, 5)]
    for p in default_bumps(smooth_problem.interior_compact()):
        res = mm.weak_convergence_residual(seq, limit, p)
        assert all(b < a for a, b in zip(res, res[1:]))

    # adding eps*|x - x0|^2 to a function with unit Hessian changes the
    # density by the constant det(I + 2 eps I) - det I = 4 eps + 4 eps^2
    space = FeSpace(triangulate(unit_square(), refinements=3), 2)
    v = interpolate(space, lambda p: 0.5 * ((p[..., 0] - 0.5) ** 2
                                            + (p[..., 1] - 0.5) ** 2))
    p = default_bumps(smooth_problem.interior_compact())[0]
    quad = Quadrature(2 * space.degree + 2)
    pv = p(phys_quad_points(space, quad).reshape(-1, 2)).reshape(
        space.mesh.num_cells, quad.num_points)
    int_p = float(np.sum(space.cell_areas * (pv @ quad.weights)))
    for eps in (1e-3, 1e-6, 1e-9):
        vs = strictify(v, eps, x0=(0.5, 0.5))
        res = mm.weak_convergence_residual([vs], v, p)[0]
        assert abs(res - (4.0 * eps + 4.0 * eps ** 2) * int_p) <= 1e-9


def test_10_degenerate_shift_continuation():
    prob = get_problem("degenerate")
    space = FeSpace(triangulate(prob.polygon, refinements=5), 2)
    grid = interior_grid(prob.interior_compact())
    u = None
    errs = []
    for eps in (1.0, 0.25, 1.0 / 16, 1.0 / 64):
        u, report = newton_solve(space, shift(prob.f, eps), prob.g, u0=u)
        assert report.converged
        errs.append(float(np.max(np.abs(u(grid) - prob.exact(grid)))))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 5e-2


def test_11_envelope_oracle_and_solution_agree():
    square = unit_square()
    traces = [
        lambda p: (p[..., 0] - 0.3) ** 2 + (p[..., 1] - 0.7) ** 2,
        lambda p: 0.7 * p[..., 0] - 0.2 * p[..., 1] + 0.1,
        lambda p: np.abs(p[..., 0] - 0.5) + np.abs(p[..., 1] - 0.5),
        lambda p: np.exp(p[..., 0] + 0.5 * p[..., 1]),
        lambda p: np.maximum(p[..., 0], p[..., 1]),
    ]
    for b in traces:
        env = mm.convex_envelope_boundary(square, b, per_edge=40)
        assert np.max(np.abs(env(env.samples) - env.values)) <= 1e-8

    prob = get_problem("envelope")
    space = FeSpace(triangulate(prob.polygon, refinements=5), 2)
    config = SolverConfig(continuation_schedule=prob.epsilon_schedule)
    u, report = continuation_solve(space, prob.f, prob.solve_boundary,
                                   config=config)
    assert report.converged
    env = mm.convex_envelope_boundary(prob.polygon, prob.g)
    grid = interior_grid(prob.interior_compact())
    assert np.max(np.abs(u(grid) - env(grid))) <= 5e-2


def test_12_aleksandrov_bound_diagnostic(smooth_problem, smooth_solution):
    square = unit_square()
    slack = mm.aleksandrov_bound(smooth_solution, smooth_problem.f, square)
    assert slack <= 0.0

    flat_f = lambda p: np.ones(len(np.atleast_2d(p)))
    flat_g = lambda p: np.zeros(len(np.atleast_2d(p)))
    space = FeSpace(triangulate(square, refinements=3), 2)
    u_flat, report = newton_solve(space, flat_f, flat_g)
    assert report.converged
    assert mm.aleksandrov_bound(u_flat, flat_f, square) <= 0.0

    # a -> 4a with v -> 2v scales every slack sample by exactly 4
    f4 = lambda p: 4.0 * np.asarray(smooth_problem.f(p))
    v2 = FeFunction(smooth_solution.space, 2.0 * smooth_solution.coeffs)
    assert (mm.aleksandrov_bound(v2, f4, square)
            == 4.0 * mm.aleksandrov_bound(smooth_solution,
                                          smooth_problem.f, square))
