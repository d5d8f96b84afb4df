"""Tests for convexity diagnostics and strictification."""

import numpy as np
import pytest

from mafem import triangulate, unit_square
from mafem.convexity import (analyze, bubble_integrals,
                             bubble_positivity_check, eigmin_2x2, strictify)
from mafem.fespace import FeSpace, interpolate


@pytest.fixture(scope="module")
def space():
    mesh = triangulate(unit_square(), refinements=2)
    return FeSpace(mesh, 2)


def test_eigmin_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b, c = rng.normal(size=3)
        lam = eigmin_2x2(a, b, c)
        ref = np.linalg.eigvalsh(np.array([[a, b], [b, c]])).min()
        assert abs(lam - ref) <= 1e-12 * (1 + abs(ref))


def test_analyze_paraboloid(space):
    u = interpolate(space, lambda p: 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2))
    rep = analyze(u)
    assert np.allclose(rep.cell_min_lambda1, 1.0, atol=1e-12)
    assert np.allclose(rep.cell_min_det, 1.0, atol=1e-12)
    assert rep.convex and rep.strictly_convex


def test_analyze_cylinder_convex_not_strict(space):
    u = interpolate(space, lambda p: 0.5 * p[:, 0] ** 2)
    rep = analyze(u)
    assert abs(rep.global_min_lambda1) <= 1e-12
    assert abs(rep.global_min_det) <= 1e-12
    assert rep.convex and not rep.strictly_convex


def test_analyze_saddle(space):
    u = interpolate(space, lambda p: p[:, 0] * p[:, 1])
    rep = analyze(u)
    assert abs(rep.global_min_lambda1 + 1.0) <= 1e-12
    assert not rep.convex


def test_analyze_sample_order_guard(space):
    u = interpolate(space, lambda p: p[:, 0] ** 2)
    mesh3 = triangulate(unit_square(), refinements=1)
    sp3 = FeSpace(mesh3, 3)
    v = interpolate(sp3, lambda p: p[:, 0] ** 3)
    with pytest.raises(ValueError):
        analyze(v, sample_order=1)
    rep = analyze(v)
    assert rep.sample_order >= 2


def test_strictify_shifts_lambda1(space):
    u = interpolate(space, lambda p: np.exp(0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2)))
    base = analyze(u)
    for eps in (1e-3, 1e-6, 1e-9):
        shifted = analyze(strictify(u, eps, x0=(0.5, 0.5)))
        assert abs(shifted.global_min_lambda1
                   - base.global_min_lambda1 - 2 * eps) <= 1e-12


def test_strictify_value_at_center_unchanged(space):
    u = interpolate(space, lambda p: p[:, 0] ** 2 - p[:, 1])
    x0 = np.array([[0.5, 0.5]])
    v = strictify(u, 1e-3, x0=(0.5, 0.5))
    assert abs(v(x0)[0] - u(x0)[0]) <= 1e-13


def test_strictify_zero_identity(space):
    u = interpolate(space, lambda p: p[:, 0] * p[:, 1])
    v = strictify(u, 0.0, x0=(0.3, 0.3))
    assert np.array_equal(v.coeffs, u.coeffs)


def test_strictify_additive(space):
    u = interpolate(space, lambda p: np.sin(p[:, 0] + p[:, 1]))
    x0 = (0.25, 0.75)
    ab = strictify(strictify(u, 1e-3, x0=x0), 2e-3, x0=x0)
    once = strictify(u, 3e-3, x0=x0)
    assert np.max(np.abs(ab.coeffs - once.coeffs)) <= 1e-14 * max(
        1.0, np.max(np.abs(once.coeffs)))


def test_strictify_rejects_negative(space):
    u = interpolate(space, lambda p: p[:, 0])
    with pytest.raises(ValueError):
        strictify(u, -1e-3, x0=(0.5, 0.5))


def test_bubble_unit_determinant(space):
    u = interpolate(space, lambda p: 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2))
    vals = bubble_integrals(u)
    assert np.allclose(vals, space.cell_areas, atol=1e-12)
    assert not bubble_positivity_check(u).any()


def test_bubble_affine_flagged(space):
    u = interpolate(space, lambda p: 1.0 + 2.0 * p[:, 0] - p[:, 1])
    vals = bubble_integrals(u)
    assert np.max(np.abs(vals)) <= 1e-12
    assert bubble_positivity_check(u).all()


def test_bubble_saddle_flagged(space):
    u = interpolate(space, lambda p: p[:, 0] * p[:, 1])
    vals = bubble_integrals(u)
    assert np.allclose(vals, -space.cell_areas, atol=1e-12)
    assert bubble_positivity_check(u).all()


def test_report_json_roundtrip(space):
    import json

    u = interpolate(space, lambda p: 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2))
    rep = analyze(u)
    data = json.loads(rep.to_json(per_cell=True))
    assert data["convex"] is True
    assert len(data["cell_min_lambda1"]) == space.mesh.num_cells
