"""Nonlinear solvers for the discrete determinant equation.

Three drivers share one problem setup (boundary data pinned at Lagrange
nodes, residual and Jacobian over interior dofs):

* newton_solve: damped Gauss-Newton on the penalized least-squares
  objective Phi(c) = 1/2 ||r(c)||^2 + eta/2 * |u|_J^2 + hinge(c), where
  |u|_J is the gradient-jump seminorm across interior edges and hinge is a
  quadratic penalty on negative Hessian eigenvalues over interior cells.
  The cofactor Jacobian is structurally rank deficient (its null directions
  are fields whose cellwise Hessian contraction vanishes while
  normal-derivative jumps move freely), so the plain discrete problem has
  manifolds of quasi-solutions; the jump penalty selects the one closest to
  gradient continuity and makes the Gauss-Newton normal matrix positive
  definite, while the hinge steers the iteration onto the convex branch
  (the determinant alone cannot tell the branches apart).  For data with an
  exact discrete solution whose gradient is continuous (e.g. quadratic
  patches) the penalized minimizer is that exact solution.
* time_march: pseudo-transient iteration nu*A*(u' - u) = +r(u) with A the
  Poisson stiffness matrix, a gradient-flow discretization whose fixed
  points are exactly the discrete solutions.
* continuation_solve: warm-started sweep over a decreasing schedule of
  positive shifts f + eps, for degenerate or unbounded data.
"""

import json
import time

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from . import convexity
from .assembly import (apply_boundary, gradient_jump_matrix, jacobian,
                       load_vector, residual, set_boundary_values,
                       stiffness_matrix)
from .errors import NonConvergenceError, SingularJacobianError
from .fespace import FeFunction, Quadrature, phys_quad_points


class SolverConfig:
    """Tolerances and knobs shared by the solve drivers."""

    def __init__(self, tol_residual=1e-10, max_iters=120, min_step=2.0 ** -20,
                 armijo=1e-4, nu=5.0, continuation_schedule=(),
                 jump_penalty=1e-2, convex_penalty=1.0, convex_allowance=1e-2,
                 tol_step=1e-10, tol_march=1e-8, march_max_iters=2000):
        if tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.tol_residual = float(tol_residual)
        self.max_iters = int(max_iters)
        self.min_step = float(min_step)
        self.armijo = float(armijo)
        self.nu = float(nu)
        self.continuation_schedule = tuple(continuation_schedule)
        self.jump_penalty = float(jump_penalty)
        self.convex_penalty = float(convex_penalty)
        self.convex_allowance = float(convex_allowance)
        self.tol_step = float(tol_step)
        self.tol_march = float(tol_march)
        self.march_max_iters = int(march_max_iters)

    def to_dict(self):
        return {
            "tol_residual": self.tol_residual,
            "max_iters": self.max_iters,
            "min_step": self.min_step,
            "armijo": self.armijo,
            "nu": self.nu,
            "continuation_schedule": list(self.continuation_schedule),
            "jump_penalty": self.jump_penalty,
            "convex_penalty": self.convex_penalty,
            "convex_allowance": self.convex_allowance,
            "tol_step": self.tol_step,
            "tol_march": self.tol_march,
            "march_max_iters": self.march_max_iters,
        }


class SolveReport:
    """Iteration history and outcome of one solve."""

    def __init__(self, method):
        self.method = method
        self.residual_history = []
        self.residual_history_sup = []
        self.step_history = []
        self.converged = False
        self.status = "running"
        self.iterations = 0
        self.min_lambda1 = None
        self.wall_time = 0.0
        self.stages = []

    def record(self, res2, res_sup, step_sup=None):
        self.residual_history.append(float(res2))
        self.residual_history_sup.append(float(res_sup))
        if step_sup is not None:
            self.step_history.append(float(step_sup))

    def finish(self, status, converged, u_h, t0):
        self.status = status
        self.converged = bool(converged)
        self.wall_time = time.perf_counter() - t0
        self.min_lambda1 = convexity.analyze(u_h).global_min_lambda1
        return self

    def to_dict(self):
        return {
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "residual_history": list(self.residual_history),
            "residual_history_sup": list(self.residual_history_sup),
            "step_history": list(self.step_history),
            "min_lambda1": self.min_lambda1,
            "wall_time": self.wall_time,
            "stages": self.stages,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def __repr__(self):
        return ("SolveReport(method={!r}, iterations={}, converged={}, "
                "status={!r})".format(self.method, self.iterations,
                                      self.converged, self.status))


def _check_positive_data(space, f):
    """Sample f at quadrature points; reject negative or vanishing data."""
    pts = phys_quad_points(space, space.default_quadrature())
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("f is not finite at sampled interior points")
    fmin = float(vals.min())
    if fmin <= 0.0:
        raise ValueError(
            "sampled min of f is {:.3e} <= 0; use continuation_solve with a "
            "positive shift schedule for degenerate data".format(fmin))
    return fmin


def default_initial_guess(space, f, g):
    """Solve the Poisson problem lap(u0) = 2*sqrt(f), u0 = g at boundary nodes.

    In 2D, det D2u = f is consistent with lap(u) = 2*sqrt(f) when
    D2u = sqrt(f)*I, which makes this the natural data-driven convex start.
    """
    A = stiffness_matrix(space)
    b = load_vector(space, lambda p: -2.0 * np.sqrt(
        np.maximum(np.asarray(f(p), dtype=float), 0.0)))
    u = FeFunction(space)
    set_boundary_values(u, apply_boundary(space, g))
    I = space.interior_dofs
    B = space.boundary_dofs
    AII = A[I][:, I].tocsc()
    rhs = b[I] - A[I][:, B] @ u.coeffs[B]
    u.coeffs[I] = splu(AII).solve(rhs)
    return u


class _ConvexityHinge:
    """Quadratic hinge penalty on negative Hessian eigenvalues.

    The determinant residual cannot tell a convex iterate from a concave
    one (det is sign-symmetric under u -> -u up to boundary data), so for
    degenerate or envelope-type data the unpenalized objective admits
    mixed-signature minimizers.  This term adds
    penalty/2 * sum_{K, q} w_q |K| max(0, -(lambda1 + allowance))^2
    over cells none of whose vertices lie on the boundary.  Cells touching
    the boundary are exempt because pinned data without a convex extension
    genuinely forces a concave layer there; the allowance keeps the hinge
    inactive near weakly convex iterates (lambda1 >= -allowance).
    """

    def __init__(self, space, penalty, allowance):
        self.space = space
        self.penalty = float(penalty)
        self.allowance = float(allowance)
        mesh = space.mesh
        on_bd = np.zeros(len(mesh.vertices), dtype=bool)
        on_bd[mesh.boundary_vertex_indices()] = True
        self.cells = np.flatnonzero(~on_bd[mesh.cells].any(axis=1))
        quad = Quadrature(max(2 * space.degree - 4, 2))
        tab = space.tables(quad)["hess"]
        jinv = space.cell_jinv[self.cells]
        a00, a01 = jinv[:, 0, 0], jinv[:, 0, 1]
        a10, a11 = jinv[:, 1, 0], jinv[:, 1, 1]
        # Packed map (hxx, hxy, hyy)_phys = T @ (.)_ref for H -> A^T H A.
        T = np.empty((len(self.cells), 3, 3))
        T[:, 0] = np.column_stack([a00 * a00, 2 * a00 * a10, a10 * a10])
        T[:, 1] = np.column_stack([a00 * a01, a00 * a11 + a01 * a10,
                                   a10 * a11])
        T[:, 2] = np.column_stack([a01 * a01, 2 * a01 * a11, a11 * a11])
        self.basis = np.einsum("cab,qlb->cqla", T, tab)
        self.gdofs = space.cell_dofs[self.cells]
        self.weights = (self.penalty * space.cell_areas[self.cells][:, None]
                        * quad.weights[None, :])
        imap = np.full(space.num_dofs, -1, dtype=np.int64)
        imap[space.interior_dofs] = np.arange(len(space.interior_dofs))
        self.cols = imap[self.gdofs]
        self.n_interior = len(space.interior_dofs)

    def deficits(self, u_h):
        """Hinge activations max(0, -(lambda1 + allowance)) per (cell, q)."""
        h = np.einsum("cqlm,cl->cqm", self.basis, u_h.coeffs[self.gdofs])
        lam1 = convexity.eigmin_2x2(h[..., 0], h[..., 1], h[..., 2])
        return np.maximum(0.0, -(lam1 + self.allowance)), h

    def value(self, u_h):
        if not len(self.cells):
            return 0.0
        t, _ = self.deficits(u_h)
        return 0.5 * float(np.sum(self.weights * t * t))

    def residual_and_jacobian(self, u_h):
        """Weighted hinge values s and sparse ds/dc over interior dofs."""
        if not len(self.cells):
            return np.zeros(0), sparse.csr_matrix((0, self.n_interior))
        t, h = self.deficits(u_h)
        ci, qi = np.nonzero(t)
        sw = np.sqrt(self.weights[ci, qi])
        s = sw * t[ci, qi]
        hxx, hxy, hyy = h[ci, qi, 0], h[ci, qi, 1], h[ci, qi, 2]
        rad = np.maximum(np.sqrt((0.5 * (hxx - hyy)) ** 2 + hxy ** 2),
                         1e-300)
        dlam = np.column_stack([0.5 - (hxx - hyy) / (4.0 * rad),
                                -hxy / rad,
                                0.5 + (hxx - hyy) / (4.0 * rad)])
        vals = -sw[:, None] * np.einsum("am,alm->al", dlam,
                                        self.basis[ci, qi])
        cols = self.cols[ci]
        keep = cols >= 0
        na, nl = cols.shape
        rows = np.broadcast_to(np.arange(na)[:, None], (na, nl))
        S = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                              shape=(na, self.n_interior)).tocsr()
        return s, S


def newton_solve(space, f, g, u0=None, config=None):
    """Damped Gauss-Newton with gradient-jump penalty; returns (u_h, report).

    Stops when the sup norm of the residual falls below tol_residual
    (status "residual") or the accepted update falls below tol_step
    (status "stationary"; the iterate is then a penalized least-squares
    critical point, the meaningful notion of discrete solution when no
    exact one exists).  Raises NonConvergenceError on line-search
    stagnation and SingularJacobianError if the normal matrix cannot be
    factorized.
    """
    if config is None:
        config = SolverConfig()
    t0 = time.perf_counter()
    report = SolveReport("newton")
    _check_positive_data(space, f)

    u = u0.copy() if u0 is not None else default_initial_guess(space, f, g)
    bc = apply_boundary(space, g)
    set_boundary_values(u, bc)

    I = space.interior_dofs
    eta = config.jump_penalty
    Q = gradient_jump_matrix(space)
    QII = Q[I][:, I].tocsr()
    hinge = None
    if config.convex_penalty > 0.0:
        hinge = _ConvexityHinge(space, config.convex_penalty,
                                config.convex_allowance)

    def objective(u_h):
        r = residual(u_h, f)
        pen = 0.5 * eta * float(u_h.coeffs @ (Q @ u_h.coeffs))
        if hinge is not None:
            pen += hinge.value(u_h)
        return 0.5 * float(r.values @ r.values) + pen, r

    def gn_direction(u_h):
        J = jacobian(u_h).matrix
        rr = residual(u_h, f)
        grad = J.T @ rr.values + eta * (Q @ u_h.coeffs)[I]
        H = J.T @ J + eta * QII
        if hinge is not None:
            s, S = hinge.residual_and_jacobian(u_h)
            if s.size:
                grad = grad + S.T @ s
                H = H + S.T @ S
        H = H.tocsc()
        try:
            lu = splu(H)
        except RuntimeError as exc:
            raise SingularJacobianError(
                "normal matrix factorization failed ({}); strictify the "
                "iterate or solve by continuation over f + eps".format(exc))
        d = lu.solve(-grad)
        if not np.all(np.isfinite(d)):
            raise SingularJacobianError(
                "singular normal matrix produced a non-finite step; "
                "strictify the iterate or solve by continuation over f + eps")
        return d, grad

    def polish(u_h, cap=1e-5):
        # Below the objective's evaluation noise the line search cannot
        # certify decrease, but the step equation is still accurate; take
        # undamped steps while they strictly contract to pin down the
        # stationary point.  Returns the refined iterate and the last
        # accepted step size (inf when no step contracted).
        prev = np.inf
        for _ in range(50):
            d, _ = gn_direction(u_h)
            d_sup = float(np.max(np.abs(d))) if len(d) else 0.0
            if d_sup > cap or d_sup >= prev:
                break
            u_h.coeffs[I] += d
            prev = d_sup
            if d_sup <= 1e-14 * (1.0 + float(np.max(np.abs(u_h.coeffs)))):
                break
        return u_h, prev

    phi, r = objective(u)
    report.record(r.norm(2), r.norm(np.inf))
    for it in range(config.max_iters):
        if r.norm(np.inf) <= config.tol_residual:
            report.iterations = it
            return u, report.finish("residual", True, u, t0)
        d, grad = gn_direction(u)
        gd = float(grad @ d)
        d_sup = float(np.max(np.abs(d))) if len(d) else 0.0
        step = 1.0
        trial = u.copy()
        while True:
            trial.coeffs[I] = u.coeffs[I] + step * d
            phi_t, r_t = objective(trial)
            if phi_t <= phi + config.armijo * step * gd:
                break
            step *= 0.5
            if step < config.min_step:
                # The predicted decrease is below the noise floor of the
                # objective, so Armijo is blind here.  The iterate is
                # terminal, not stuck, if it is already nearly fixed or if
                # undamped steps contract from it.
                if d_sup <= 1e-6 or abs(gd) <= 16 * np.finfo(float).eps * phi:
                    u, _ = polish(u)
                    report.iterations = it
                    return u, report.finish("stationary", True, u, t0)
                u, last_step = polish(u, cap=1e-4)
                if last_step <= 1e-6:
                    report.iterations = it
                    return u, report.finish("stationary", True, u, t0)
                report.iterations = it
                report.finish("stagnation", False, u, t0)
                raise NonConvergenceError(
                    "line search stagnated below min_step", last_iterate=u,
                    report=report)
        u, phi, r = trial, phi_t, r_t
        step_sup = step * float(np.max(np.abs(d)))
        report.record(r.norm(2), r.norm(np.inf), step_sup)
        if step_sup <= config.tol_step:
            u, _ = polish(u)
            report.iterations = it + 1
            return u, report.finish("stationary", True, u, t0)
    report.iterations = config.max_iters
    if r.norm(np.inf) <= config.tol_residual:
        return u, report.finish("residual", True, u, t0)
    report.finish("max_iters", False, u, t0)
    raise NonConvergenceError("newton_solve hit max_iters", last_iterate=u,
                              report=report)


def time_march(space, f, g, u0=None, config=None):
    """Pseudo-transient iteration nu*A*(u' - u) = +r(u); returns (u_h, report).

    A is the Poisson stiffness matrix on interior dofs, so one step solves
    nu * int grad(u') . grad(v) = nu * int grad(u) . grad(v)
                                  + sum_K int_K (det D2u - f) v.
    The update direction +A^{-1} r / nu is the dissipative orientation of
    the gradient flow: the linearization of the cellwise determinant acts
    like a (negative) weak Laplacian, so the flow u_t = A^{-1} r contracts
    along residual-active directions, while the opposite sign amplifies
    them (see the solver tests for the divergence experiment).  Fixed
    points are exactly the discrete solutions.  After each step, cells with
    min Hessian eigenvalue below -1e-8 trigger a strictification by the
    violation magnitude and boundary re-pinning, preserving weak convexity.
    """
    if config is None:
        config = SolverConfig()
    t0 = time.perf_counter()
    report = SolveReport("time_march")
    _check_positive_data(space, f)

    u = u0.copy() if u0 is not None else default_initial_guess(space, f, g)
    bc = apply_boundary(space, g)
    set_boundary_values(u, bc)

    I = space.interior_dofs
    A = stiffness_matrix(space)
    lu = splu(A[I][:, I].tocsc())
    tol_convex = 1e-8

    scale = 1.0 + float(np.max(np.abs(u.coeffs)))
    for it in range(config.march_max_iters):
        r = residual(u, f)
        d = lu.solve(r.values) / config.nu
        step_sup = float(np.max(np.abs(d))) if len(d) else 0.0
        report.record(r.norm(2), r.norm(np.inf), step_sup)
        if not np.isfinite(step_sup) or step_sup > 1e6 * scale:
            report.iterations = it
            report.finish("diverged", False, u, t0)
            raise NonConvergenceError(
                "time_march diverged (the gradient flow is unstable along "
                "edge-jump coupling modes; use newton_solve)",
                last_iterate=u, report=report)
        if step_sup <= config.tol_march:
            report.iterations = it
            return u, report.finish("fixed_point", True, u, t0)
        u.coeffs[I] += d
        lam = convexity.analyze(u).global_min_lambda1
        if np.isfinite(lam) and lam < -tol_convex:
            u = convexity.strictify(u, -lam)
            set_boundary_values(u, bc)
    report.iterations = config.march_max_iters
    report.finish("max_iters", False, u, t0)
    raise NonConvergenceError("time_march hit max_iters", last_iterate=u,
                              report=report)


def continuation_solve(space, f, g, config=None, u0=None):
    """Warm-started Newton sweep over the shift schedule f + eps_j.

    Solves the problems with right-hand side f + eps_j for the configured
    decreasing schedule, starting each stage from the previous solution
    (the first from u0 when given), and returns the final iterate with a
    report whose stages record the per-stage outcomes.  A failure of the
    first stage is a failure of the whole solve; later stages fall back to
    the last successful iterate.
    """
    if config is None:
        config = SolverConfig(continuation_schedule=(0.0,))
    schedule = config.continuation_schedule or (0.0,)
    t0 = time.perf_counter()
    report = SolveReport("continuation")
    u = u0
    for j, eps in enumerate(schedule):
        f_eps = (lambda e: lambda p: np.asarray(f(p), dtype=float) + e)(eps)
        try:
            u, stage = newton_solve(space, f_eps, g, u0=u, config=config)
        except NonConvergenceError as exc:
            if j == 0 or exc.last_iterate is None:
                report.iterations = j
                report.finish("stage_failed", False,
                              exc.last_iterate or FeFunction(space), t0)
                raise NonConvergenceError(
                    "continuation stage eps={} failed".format(eps),
                    last_iterate=exc.last_iterate, report=report)
            u = exc.last_iterate
            stage = exc.report
        report.stages.append({"eps": float(eps), **stage.to_dict()})
        report.residual_history.extend(stage.residual_history)
        report.residual_history_sup.extend(stage.residual_history_sup)
        report.step_history.extend(stage.step_history)
        report.iterations += stage.iterations
    converged = bool(report.stages and report.stages[-1]["converged"])
    return u, report.finish(report.stages[-1]["status"], converged, u, t0)
