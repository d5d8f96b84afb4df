import numpy as np
import pytest

from mafem import (
    ConvexPolygon,
    DegeneratePolygonError,
    EmptySubdomainError,
    Mesh,
    check_mesh,
    interior_subdomain,
    refine_uniform,
    regular_polygon,
    shape_metrics,
    triangulate,
    unit_square,
)
from mafem.geometry import clip_convex, nearest_boundary_point


def tri_mesh(verts):
    verts = np.asarray(verts, dtype=float)
    return Mesh(verts, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [0, 1, 2])


class TestConvexPolygon:
    def test_square_basics(self):
        sq = unit_square()
        assert sq.area == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(sq.centroid, [0.5, 0.5])
        assert sq.diameter == pytest.approx(np.sqrt(2.0))

    def test_rejects_too_few_vertices(self):
        with pytest.raises(DegeneratePolygonError):
            ConvexPolygon([[0, 0], [1, 0]])

    def test_rejects_clockwise(self):
        with pytest.raises(DegeneratePolygonError):
            ConvexPolygon([[0, 0], [0, 1], [1, 0]])

    def test_rejects_nonconvex(self):
        with pytest.raises(DegeneratePolygonError):
            ConvexPolygon([[0, 0], [2, 0], [1, 0.2], [0, 2]])

    def test_collinear_vertex_removed(self):
        p = ConvexPolygon([[0, 0], [0.5, 0], [1, 0], [1, 1], [0, 1]])
        assert len(p) == 4
        assert p.area == pytest.approx(1.0)

    def test_rejects_all_collinear(self):
        with pytest.raises(DegeneratePolygonError):
            ConvexPolygon([[0, 0], [1, 0], [2, 0]])

    def test_contains(self):
        sq = unit_square()
        inside = sq.contains(np.array([[0.5, 0.5], [0.0, 0.0], [1.1, 0.5]]))
        assert inside.tolist() == [True, True, False]

    def test_boundary_distance(self):
        sq = unit_square()
        d = sq.distance_to_boundary(np.array([[0.5, 0.5], [0.25, 0.5]]))
        assert d == pytest.approx([0.5, 0.25])

    def test_inradius_square(self):
        assert unit_square().inradius() == pytest.approx(0.5, abs=1e-9)

    def test_inradius_triangle(self):
        # right isoceles, legs 1: r = (a + b - c)/2
        t = ConvexPolygon([[0, 0], [1, 0], [0, 1]])
        assert t.inradius() == pytest.approx((2 - np.sqrt(2)) / 2, abs=1e-9)

    def test_clip_convex_squares(self):
        a = unit_square().vertices
        b = a + 0.5
        inter = clip_convex(a, b)
        assert ConvexPolygon(inter).area == pytest.approx(0.25)

    def test_nearest_boundary_point(self):
        sq = unit_square()
        q = nearest_boundary_point(sq, np.array([[0.5, -0.3], [1.4, 0.5]]))
        assert np.allclose(q, [[0.5, 0.0], [1.0, 0.5]])


class TestTriangulate:
    def test_triangle_single_cell(self):
        t = ConvexPolygon([[0, 0], [1, 0], [0, 1]])
        mesh = triangulate(t, h_target=2.0)
        assert mesh.num_cells == 1
        assert mesh.cell_areas().sum() == pytest.approx(0.5, abs=1e-15)

    def test_square_area_conserved(self):
        mesh = triangulate(unit_square(), h_target=0.3)
        assert mesh.cell_areas().sum() == pytest.approx(1.0, abs=1e-12)
        assert mesh.mesh_size() <= 0.3

    def test_hexagon_area(self):
        mesh = triangulate(regular_polygon(6), h_target=0.5)
        assert mesh.cell_areas().sum() == pytest.approx(
            3.0 * np.sqrt(3.0) / 2.0, abs=1e-10
        )

    def test_rejects_degenerate(self):
        with pytest.raises(DegeneratePolygonError):
            ConvexPolygon([[0, 0], [1e-8, 0], [0, 1e-8]])

    def test_all_cells_positive(self):
        mesh = triangulate(regular_polygon(5), h_target=0.2)
        assert mesh.cell_areas().min() > 0


class TestRefine:
    def test_one_cell_to_four(self):
        mesh = refine_uniform(tri_mesh([[0, 0], [1, 0], [0, 1]]))
        assert mesh.num_cells == 4
        assert mesh.cell_areas().sum() == pytest.approx(0.5, abs=1e-15)

    def test_equilateral_children_similar(self):
        m0 = tri_mesh([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        m1 = refine_uniform(m0)
        r0, _ = shape_metrics(m0)
        r1, _ = shape_metrics(m1)
        assert r1 == pytest.approx(r0, rel=1e-12)

    def test_two_refinements(self):
        m0 = triangulate(unit_square())
        m2 = refine_uniform(refine_uniform(m0))
        assert m2.num_cells == 16 * m0.num_cells
        assert m2.mesh_size() == pytest.approx(m0.mesh_size() / 4, rel=1e-12)

    def test_boundary_tags_inherited(self):
        m = refine_uniform(triangulate(unit_square()))
        assert set(m.boundary_tags.tolist()) == {0, 1, 2, 3}
        # bottom-edge children stay on y = 0
        bottom = m.boundary_edges[m.boundary_tags == 0]
        assert np.all(m.vertices[np.unique(bottom)][:, 1] == 0.0)

    def test_conformity(self):
        mesh = refine_uniform(triangulate(regular_polygon(5)))
        report = check_mesh(mesh, regular_polygon(5))
        assert report["ok"]


class TestShapeMetrics:
    def test_equilateral(self):
        m = tri_mesh([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        ratio, uniformity = shape_metrics(m)
        assert ratio == pytest.approx(2.0 * np.sqrt(3.0), rel=1e-12)
        assert uniformity == 1.0

    def test_right_isoceles(self):
        m = tri_mesh([[0, 0], [1, 0], [0, 1]])
        ratio, _ = shape_metrics(m)
        assert ratio == pytest.approx(2.0 + 2.0 * np.sqrt(2.0), rel=1e-12)

    def test_uniform_square_mesh(self):
        _, uniformity = shape_metrics(triangulate(unit_square(), h_target=0.2))
        assert uniformity == pytest.approx(1.0, rel=1e-12)

    def test_regularity_preserved_under_refinement(self):
        m = triangulate(regular_polygon(7))
        r0, _ = shape_metrics(m)
        for _ in range(3):
            m = refine_uniform(m)
        r3, _ = shape_metrics(m)
        assert r3 == pytest.approx(r0, rel=1e-10)


class TestInteriorSubdomain:
    def test_square_offset(self):
        inner = interior_subdomain(unit_square(), 0.1)
        assert sorted(map(tuple, np.round(inner.vertices, 12))) == [
            (0.1, 0.1), (0.1, 0.9), (0.9, 0.1), (0.9, 0.9),
        ]

    def test_zero_margin_identity(self):
        sq = unit_square()
        assert interior_subdomain(sq, 0.0) is sq

    def test_triangle_offset_distances(self):
        t = ConvexPolygon([[0, 0], [4, 0], [0, 4]])
        inner = interior_subdomain(t, 0.5)
        # every offset vertex at distance >= 0.5 from each input edge line
        for v, n in zip(t.vertices, t.edge_normals()):
            assert np.all((inner.vertices - v) @ n >= 0.5 - 1e-12)
        assert t.contains(inner.vertices).all()

    def test_too_large_margin(self):
        with pytest.raises(EmptySubdomainError):
            interior_subdomain(unit_square(), 0.6)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        mesh = refine_uniform(triangulate(regular_polygon(5)))
        path = tmp_path / "mesh.txt"
        mesh.save(path)
        back = Mesh.load(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.cells, mesh.cells)
        assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
        assert np.array_equal(back.boundary_tags, mesh.boundary_tags)

    def test_format_layout(self, tmp_path):
        mesh = triangulate(ConvexPolygon([[0, 0], [1, 0], [0, 1]]))
        path = tmp_path / "mesh.txt"
        mesh.save(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "3"
        assert lines[4] == "1"
        assert len(lines) == 5 + 1 + 3  # header+verts, cell block, 3 boundary edges
