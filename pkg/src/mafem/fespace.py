"""Degree-k C0 Lagrange finite element spaces on triangle meshes (k >= 2).

The reference triangle has vertices (0,0), (1,0), (0,1).  Nodes are the
equispaced barycentric lattice, enumerated vertices first, then edge
interiors (edge 0: v0-v1, edge 1: v1-v2, edge 2: v2-v0), then cell
interiors.  Basis polynomials come from inverting a monomial Vandermonde
matrix; all cell maps are affine, so derivatives transform exactly by the
chain rule.
"""

import math
import os

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh  # noqa: F401  (re-exported for space serialization users)


def bary_lattice(order):
    """Equispaced barycentric lattice (i+j+l = order), vertices first.

    Returns (nodes, entities): nodes is an (n, 3) float array of barycentric
    coordinates; entities[n] is ('vertex', i), ('edge', e, step) with step
    counted from the edge's first vertex, or ('cell', rank).
    """
    k = order
    nodes, entities = [], []
    nodes += [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    entities += [("vertex", 0), ("vertex", 1), ("vertex", 2)]
    for e, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
        for s in range(1, k):
            lam = [0.0, 0.0, 0.0]
            lam[a] = (k - s) / k
            lam[b] = s / k
            nodes.append(tuple(lam))
            entities.append(("edge", e, s))
    rank = 0
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append(((k - i - j) / k, i / k, j / k))
            entities.append(("cell", rank))
            rank += 1
    return np.array(nodes), entities


def _monomial_powers(k):
    return [(a, b) for total in range(k + 1) for a in range(total, -1, -1)
            for b in [total - a]]


def _mono_table(points, powers, dx=0, dy=0):
    """Evaluate d^(dx,dy) of each monomial at reference points (n, 2)."""
    pts = np.atleast_2d(points)
    out = np.zeros((len(pts), len(powers)))
    for m, (a, b) in enumerate(powers):
        if a < dx or b < dy:
            continue
        c = math.perm(a, dx) * math.perm(b, dy)
        out[:, m] = c * pts[:, 0] ** (a - dx) * pts[:, 1] ** (b - dy)
    return out


class ReferenceElement:
    """Lagrange basis of degree k on the reference triangle."""

    def __init__(self, degree):
        if degree < 2:
            raise ValueError("degree must be at least 2")
        self.degree = degree
        self.nodes_bary, self.entities = bary_lattice(degree)
        self.nodes = self.nodes_bary[:, 1:]  # reference coordinates (xi, eta)
        self.powers = _monomial_powers(degree)
        vand = _mono_table(self.nodes, self.powers)
        self.coeffs = np.linalg.inv(vand)

    @property
    def num_nodes(self):
        return len(self.nodes)

    def tabulate(self, points_ref):
        """Basis values/derivatives at reference points.

        Returns dict with 'val' (n, nloc), 'grad' (n, nloc, 2) and 'hess'
        (n, nloc, 3), Hessian components ordered (dxx, dxy, dyy) in
        reference coordinates.
        """
        pts = np.atleast_2d(points_ref)
        val = _mono_table(pts, self.powers) @ self.coeffs
        grad = np.stack([
            _mono_table(pts, self.powers, 1, 0) @ self.coeffs,
            _mono_table(pts, self.powers, 0, 1) @ self.coeffs,
        ], axis=-1)
        hess = np.stack([
            _mono_table(pts, self.powers, 2, 0) @ self.coeffs,
            _mono_table(pts, self.powers, 1, 1) @ self.coeffs,
            _mono_table(pts, self.powers, 0, 2) @ self.coeffs,
        ], axis=-1)
        return {"val": val, "grad": grad, "hess": hess}


class Quadrature:
    """Conical-product rule on the reference triangle, exact to a set order.

    points are barycentric; weights are positive and sum to 1, so that
    integral over a cell K = |K| * sum(w * f(points)).
    """

    def __init__(self, order):
        n = (order + 2) // 2  # Gauss with n points is exact to degree 2n-1
        xj, wj = roots_jacobi(n, 1.0, 0.0)
        xl, wl = roots_legendre(n)
        u = 0.5 * (xj + 1.0)   # absorbs the (1-u) cone factor
        v = 0.5 * (xl + 1.0)
        wu = wj / 4.0
        wv = wl / 2.0
        xi = np.repeat(u, n)
        eta = np.tile(v, n) * (1.0 - xi)
        w = 2.0 * np.repeat(wu, n) * np.tile(wv, n)  # normalized: sum = 1
        self.order = order
        self.points = np.column_stack([1.0 - xi - eta, xi, eta])
        self.weights = w

    @property
    def num_points(self):
        return len(self.weights)

    @property
    def points_ref(self):
        return self.points[:, 1:]

    def monomial_defect(self, max_order=None):
        """Max error against exact reference-triangle monomial integrals.

        integral over the reference triangle of x^a y^b = a! b! / (a+b+2)!.
        """
        q = self.order if max_order is None else max_order
        worst = 0.0
        for a in range(q + 1):
            for b in range(q + 1 - a):
                exact = (math.factorial(a) * math.factorial(b)
                         / math.factorial(a + b + 2))
                approx = 0.5 * np.sum(
                    self.weights * self.points[:, 1] ** a * self.points[:, 2] ** b
                )
                worst = max(worst, abs(approx - exact))
        return worst


class FeSpace:
    """Global C0 Lagrange space over a mesh.

    dofs are numbered by entity: mesh vertices, then mesh edges (k-1 dofs
    each, ordered away from the edge's smaller vertex index), then cell
    interiors.  This makes shared-edge dofs coincide by construction.
    """

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.degree = int(degree)
        self.ref = ReferenceElement(self.degree)

        edges, cell_edges = mesh.edge_midpoint_index()
        nv, ne, nc = mesh.num_vertices, len(edges), mesh.num_cells
        k = self.degree
        n_edge = k - 1
        n_cell = (k - 1) * (k - 2) // 2
        self.num_dofs = nv + ne * n_edge + nc * n_cell
        self.edges = edges

        cell_dofs = np.empty((nc, self.ref.num_nodes), dtype=np.int64)
        for n, ent in enumerate(self.ref.entities):
            if ent[0] == "vertex":
                cell_dofs[:, n] = mesh.cells[:, ent[1]]
            elif ent[0] == "edge":
                e, s = ent[1], ent[2]
                first = mesh.cells[:, e]
                second = mesh.cells[:, (e + 1) % 3]
                eid = cell_edges[:, e]
                # rank measured from the globally smaller endpoint
                rank = np.where(first < second, s - 1, k - s - 1)
                cell_dofs[:, n] = nv + eid * n_edge + rank
            else:
                cell_dofs[:, n] = nv + ne * n_edge + \
                    np.arange(nc) * n_cell + ent[1]
        self.cell_dofs = cell_dofs

        coords = np.empty((self.num_dofs, 2))
        coords[:nv] = mesh.vertices
        for r in range(n_edge):
            t = (r + 1) / k
            a = mesh.vertices[edges[:, 0]]
            b = mesh.vertices[edges[:, 1]]
            coords[nv + np.arange(ne) * n_edge + r] = a + t * (b - a)
        if n_cell:
            interior = [i for i, e in enumerate(self.ref.entities)
                        if e[0] == "cell"]
            lam = self.ref.nodes_bary[interior]  # (n_cell, 3)
            xy = mesh.cell_coords()  # (nc, 3, 2)
            pts = np.einsum("rj,cjd->crd", lam, xy)
            base = nv + ne * n_edge
            coords[base:] = pts.reshape(-1, 2)
        self.dof_coords = coords

        # boundary dofs: boundary vertices plus dofs of boundary edges
        edge_id = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
        bdofs = set(map(int, np.unique(mesh.boundary_edges)))
        for i, j in mesh.boundary_edges:
            eid = edge_id[tuple(sorted((int(i), int(j))))]
            bdofs.update(range(nv + eid * n_edge, nv + (eid + 1) * n_edge))
        self.boundary_dofs = np.array(sorted(bdofs), dtype=np.int64)
        mask = np.ones(self.num_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        self.interior_dofs = np.nonzero(mask)[0]

        # affine geometry, fixed per cell
        xy = mesh.cell_coords()
        jac = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=-1)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        self.cell_jac = jac
        self.cell_jinv = inv
        self.cell_areas = 0.5 * det

        self._tab_cache = {}
        self._tree = None

    def __repr__(self):
        return (f"FeSpace(degree={self.degree}, dofs={self.num_dofs}, "
                f"cells={self.mesh.num_cells})")

    def default_quadrature(self):
        return Quadrature(2 * self.degree)

    def tables(self, quad):
        """Cached reference tabulation at a quadrature rule's points."""
        key = quad.order
        if key not in self._tab_cache:
            self._tab_cache[key] = self.ref.tabulate(quad.points_ref)
        return self._tab_cache[key]

    def locate(self, points):
        """Cell index and reference coordinates for each physical point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            centroids = self.mesh.cell_coords().mean(axis=1)
            self._tree = cKDTree(centroids)
        m = min(self.mesh.num_cells, 16)
        _, cand = self._tree.query(pts, k=m)
        cand = np.atleast_2d(cand.reshape(len(pts), -1))
        v0 = self.mesh.vertices[self.mesh.cells[cand, 0]]
        d = pts[:, None, :] - v0
        jinv = self.cell_jinv[cand]
        ref = np.einsum("pcij,pcj->pci", jinv, d)
        bary_min = np.minimum(np.minimum(ref[..., 0], ref[..., 1]),
                              1.0 - ref[..., 0] - ref[..., 1])
        best = np.argmax(bary_min, axis=1)
        rows = np.arange(len(pts))
        score = bary_min[rows, best]
        if np.any(score < -1e-6 * max(self.mesh.mesh_size(), 1.0)):
            raise ValueError("point outside the meshed domain")
        return cand[rows, best], ref[rows, best]

    def check_conformity(self, seed=0):
        """Max mismatch of a random member across interior edges.

        Samples 2(k+1) points on every edge shared by two cells and
        evaluates the member from both sides.
        """
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(self.num_dofs)
        edges, cell_edges = self.mesh.edge_midpoint_index()
        owners = [[] for _ in range(len(edges))]
        for c in range(self.mesh.num_cells):
            for e in range(3):
                owners[cell_edges[c, e]].append(c)
        t = np.linspace(0.0, 1.0, 2 * (self.degree + 1))
        worst = 0.0
        for eid, cells in enumerate(owners):
            if len(cells) != 2:
                continue
            a, b = self.mesh.vertices[edges[eid]]
            pts = a[None, :] + t[:, None] * (b - a)[None, :]
            vals = []
            for c in cells:
                v0 = self.mesh.vertices[self.mesh.cells[c, 0]]
                ref = (pts - v0) @ self.cell_jinv[c].T
                tab = self.ref.tabulate(ref)["val"]
                vals.append(tab @ coeffs[self.cell_dofs[c]])
            worst = max(worst, float(np.max(np.abs(vals[0] - vals[1]))))
        return worst


class FeFunction:
    """Member of an FeSpace, stored by its global coefficient vector."""

    def __init__(self, space, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.num_dofs)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (space.num_dofs,):
            raise ValueError("coefficient vector has wrong length")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")

    def copy(self):
        return FeFunction(self.space, self.coeffs.copy())

    def _eval_tab(self, points, key):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells, ref = self.space.locate(pts)
        out = None
        for c in np.unique(cells):
            sel = cells == c
            tab = self.space.ref.tabulate(ref[sel])[key]
            local = self.coeffs[self.space.cell_dofs[c]]
            v = np.tensordot(tab, local, axes=([1], [0]))
            if out is None:
                out = np.zeros((len(pts),) + v.shape[1:])
            out[sel] = v
        return out, cells

    def __call__(self, points):
        v, _ = self._eval_tab(points, "val")
        return v if np.asarray(points).ndim == 2 else float(v[0])

    def gradient(self, points):
        g_ref, cells = self._eval_tab(points, "grad")
        jinv = self.space.cell_jinv[cells]
        g = np.einsum("pji,pj->pi", jinv, g_ref)
        return g if np.asarray(points).ndim == 2 else g[0]

    def hessian(self, points):
        """Cellwise Hessians as (n, 3) arrays (dxx, dxy, dyy)."""
        h_ref, cells = self._eval_tab(points, "hess")
        h = _push_hessian(h_ref[:, None, :], self.space.cell_jinv[cells])[:, 0]
        return h if np.asarray(points).ndim == 2 else h[0]

    def cell_values(self, quad):
        tab = self.space.tables(quad)["val"]
        return self.coeffs[self.space.cell_dofs] @ tab.T

    def cell_gradients(self, quad):
        tab = self.space.tables(quad)["grad"]
        g_ref = np.einsum("cj,qjd->cqd", self.coeffs[self.space.cell_dofs], tab)
        return np.einsum("cji,cqj->cqi", self.space.cell_jinv, g_ref)

    def cell_hessians(self, quad):
        """(nc, nq, 3) physical Hessians (dxx, dxy, dyy) at quadrature points."""
        tab = self.space.tables(quad)["hess"]
        h_ref = np.einsum("cj,qjm->cqm", self.coeffs[self.space.cell_dofs], tab)
        return _push_hessian(h_ref, self.space.cell_jinv)

    def save(self, path, mesh_ref):
        """Plain-text save: mesh file reference, degree, one coeff per line."""
        with open(path, "w") as fh:
            fh.write(f"{mesh_ref}\n{self.space.degree}\n")
            for c in self.coeffs:
                fh.write(f"{c:.17g}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()
        mesh_ref, degree = lines[0].strip(), int(lines[1])
        if not os.path.isabs(mesh_ref):
            mesh_ref = os.path.join(os.path.dirname(os.path.abspath(path)),
                                    mesh_ref)
        mesh = Mesh.load(mesh_ref)
        space = FeSpace(mesh, degree)
        return cls(space, np.array(lines[2:], dtype=float))


def _push_hessian(h_ref, jinv):
    """Map reference Hessians (..., 3) to physical ones via A^T H A, A = Jinv.

    jinv broadcasts over the leading axis of h_ref ((nc, nq, 3) with
    (nc, 2, 2), or (np, 3) with (np, 2, 2)).
    """
    a00 = jinv[..., 0, 0]
    a01 = jinv[..., 0, 1]
    a10 = jinv[..., 1, 0]
    a11 = jinv[..., 1, 1]
    if h_ref.ndim == 3 and jinv.ndim == 3:
        a00, a01, a10, a11 = (a[:, None] for a in (a00, a01, a10, a11))
    h0, h1, h2 = h_ref[..., 0], h_ref[..., 1], h_ref[..., 2]
    out = np.empty_like(h_ref)
    out[..., 0] = a00 * a00 * h0 + 2 * a00 * a10 * h1 + a10 * a10 * h2
    out[..., 1] = a00 * a01 * h0 + (a00 * a11 + a01 * a10) * h1 + a10 * a11 * h2
    out[..., 2] = a01 * a01 * h0 + 2 * a01 * a11 * h1 + a11 * a11 * h2
    return out


def eval_field(f, points):
    """Evaluate a scalar field at (n, 2) points, accepting scalar callables."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    try:
        v = np.asarray(f(pts), dtype=float)
        if v.shape == (len(pts),):
            return v
    except Exception:
        pass
    return np.array([float(f(p)) for p in pts])


def interpolate(space, u):
    """Nodal interpolant: coefficients are the field values at Lagrange nodes."""
    if isinstance(u, FeFunction) and u.space is space:
        # already determined by its nodal values; exact projection
        return u.copy()
    vals = eval_field(u, space.dof_coords)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field is not finite at an interpolation node")
    return FeFunction(space, vals)


def _sample_lattice(order):
    lam, _ = bary_lattice(order)
    return lam[:, 1:]


def broken_seminorm(v, t, p=2, quad=None, sample_order=10):
    """Cellwise Sobolev seminorm of order t (0, 1 or 2), p = 2 or inf.

    p=2 integrates squared derivatives by quadrature (the order-2 term is
    the Hessian Frobenius norm: dxx^2 + 2 dxy^2 + dyy^2).  p=inf takes the
    max over a per-cell sample lattice.
    """
    if t not in (0, 1, 2):
        raise ValueError("derivative order t must be 0, 1 or 2")
    space = v.space
    if p == 2:
        if quad is None:
            quad = Quadrature(2 * space.degree + 2)
        w, areas = quad.weights, space.cell_areas
        if t == 0:
            dens = v.cell_values(quad) ** 2
        elif t == 1:
            g = v.cell_gradients(quad)
            dens = g[..., 0] ** 2 + g[..., 1] ** 2
        else:
            h = v.cell_hessians(quad)
            dens = h[..., 0] ** 2 + 2 * h[..., 1] ** 2 + h[..., 2] ** 2
        return float(np.sqrt(np.sum(areas * (dens @ w))))
    if p == np.inf or p == "inf":
        pts = _sample_lattice(sample_order)
        tab = space.ref.tabulate(pts)
        local = v.coeffs[space.cell_dofs]
        if t == 0:
            vals = local @ tab["val"].T
            return float(np.abs(vals).max())
        if t == 1:
            g_ref = np.einsum("cj,qjd->cqd", local, tab["grad"])
            g = np.einsum("cji,cqj->cqi", space.cell_jinv, g_ref)
            return float(np.abs(g).max())
        h_ref = np.einsum("cj,qjm->cqm", local, tab["hess"])
        h = _push_hessian(h_ref, space.cell_jinv)
        return float(np.abs(h).max())
    raise ValueError("p must be 2 or inf")


def broken_norm(v, t, p=2, quad=None, sample_order=10):
    """Cellwise Sobolev norm: combines seminorms of orders 0..t."""
    semis = [broken_seminorm(v, s, p, quad=quad, sample_order=sample_order)
             for s in range(t + 1)]
    if p == 2:
        return float(np.sqrt(np.sum(np.square(semis))))
    return float(np.max(semis))


def verify_inverse_inequality(space, trials, seed=0, draws=None):
    """Max over random members of |v|_{2,inf,h} * h^3 / |v|_{0,2,h}.

    Measures the constant in the inverse estimate between the broken
    W^{2,inf} and L2 norms; the h power is 2 + d/2 with d = 2.  Zero members
    are skipped.  `draws` supplies explicit coefficient vectors instead of
    random ones.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    if draws is None:
        draws = (rng.standard_normal(space.num_dofs) for _ in range(trials))
    h = space.mesh.mesh_size()
    worst = 0.0
    for coeffs in draws:
        v = FeFunction(space, coeffs)
        denom = broken_norm(v, 0, 2)
        if denom == 0.0:
            continue
        worst = max(worst, broken_norm(v, 2, np.inf) * h ** 3 / denom)
    return worst


def phys_quad_points(space, quad):
    """(nc, nq, 2) physical coordinates of quadrature points."""
    return np.einsum("qj,cjd->cqd", quad.points, space.mesh.cell_coords())


def _field_at_qpts(space, quad, f):
    pts = phys_quad_points(space, quad)
    return eval_field(f, pts.reshape(-1, 2)).reshape(pts.shape[:2])


def l2_error(v, exact, quad=None):
    """L2 norm of v minus a callable field, by cellwise quadrature."""
    space = v.space
    if quad is None:
        quad = Quadrature(2 * space.degree + 2)
    d = v.cell_values(quad) - _field_at_qpts(space, quad, exact)
    return float(np.sqrt(np.sum(space.cell_areas * ((d ** 2) @ quad.weights))))


def broken_error_h2(v, exact, exact_grad, exact_hess, quad=None):
    """Broken H2 error against callables for the field and its derivatives.

    exact_grad maps (n, 2) points to (n, 2) gradients; exact_hess to (n, 3)
    Hessian components (dxx, dxy, dyy).  The second-order term uses the
    Hessian Frobenius density dxx^2 + 2 dxy^2 + dyy^2.
    """
    space = v.space
    if quad is None:
        quad = Quadrature(2 * space.degree + 2)
    pts = phys_quad_points(space, quad)
    flat = pts.reshape(-1, 2)
    shape = pts.shape[:2]
    d0 = v.cell_values(quad) - eval_field(exact, flat).reshape(shape)
    d1 = v.cell_gradients(quad) - np.asarray(exact_grad(flat),
                                             dtype=float).reshape(shape + (2,))
    d2 = v.cell_hessians(quad) - np.asarray(exact_hess(flat),
                                            dtype=float).reshape(shape + (3,))
    dens = (d0 ** 2 + d1[..., 0] ** 2 + d1[..., 1] ** 2
            + d2[..., 0] ** 2 + 2 * d2[..., 1] ** 2 + d2[..., 2] ** 2)
    return float(np.sqrt(np.sum(space.cell_areas * (dens @ quad.weights))))


def sup_error(v, exact, points):
    """Max |v - exact| over the given sample points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.max(np.abs(v(pts) - eval_field(exact, pts))))
