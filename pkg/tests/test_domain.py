import math

import numpy as np
import pytest
import shapely
from hypothesis import given, settings, strategies as st

from nlspec import domain as D


def square():
    return D.unit_square()


def test_ball_measure():
    assert D.measure(D.Ball((0.0, 0.0), 1.0)) == pytest.approx(math.pi)
    assert D.measure(D.Ball((0.0,), 0.5)) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_rough_measure_closed_form_and_counting(n):
    r = D.Rough(n)
    assert D.measure(r) == 1.0
    lo, hi = r.bbox()
    est, _ = D._refine(r.contains, lo, hi)
    assert abs(est - 1.0) <= 1e-3


@pytest.mark.parametrize("a", [1.0, 0.5, 0.125])
def test_stretched_square_has_unit_measure(a):
    d = D.Mapped(square(), D.AffineDiagonal((a, 1.0 / a)))
    assert D.measure(d) == pytest.approx(1.0, rel=1e-14)


def test_affine_measure_is_product_of_scales():
    d = D.Mapped(D.Ball((0.3, 0.1), 0.7), D.AffineDiagonal((2.0, 0.25)))
    assert D.measure(d) == pytest.approx(math.pi * 0.49 * 0.5, rel=1e-14)


def test_perturbed_measure_by_counting_matches_jacobian_integral():
    m = D.PerturbationField(D.VectorField("radial_bump"), 0.2)
    d = D.Mapped(square(), m)
    assert d.exact_measure() is None
    n = 400
    x = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    integral = float(np.mean(m.jacobian_det(pts)))
    assert D.measure(d) == pytest.approx(integral, rel=2e-3)


def test_symdiff_identical_is_zero():
    assert D.symmetric_difference_measure(square(), square()) == 0.0
    r = D.Rough(5)
    assert D.symmetric_difference_measure(r, D.Rough(5)) == 0.0


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
def test_rough_symdiff_closed_form(n):
    assert D.symmetric_difference_measure(square(), D.Rough(n)) == pytest.approx(2.0 / (math.pi * n), rel=1e-14)
    rep = D.symmetric_difference_report(D.Rough(n), square())
    assert abs(rep["estimate"] - 2.0 / (math.pi * n)) < 1e-3
    assert not rep["flagged"]


def test_concentric_annulus():
    a, b = D.Ball((0.0, 0.0), 1.0), D.Ball((0.0, 0.0), 1.1)
    assert D.symmetric_difference_measure(a, b) == pytest.approx(0.21 * math.pi, rel=1e-13)
    est, _ = D.symmetric_difference_estimate(a, b)
    assert est == pytest.approx(0.21 * math.pi, rel=2e-3)


def test_box_and_ball_closed_forms_match_counting():
    b1, b2 = D.Box((0.0, 0.0), (1.0, 1.0)), D.Box((0.5, 0.25), (1.5, 0.75))
    assert D.symmetric_difference_measure(b1, b2) == pytest.approx(1.0)
    c1, c2 = D.Ball((0.0, 0.0), 1.0), D.Ball((0.8, 0.0), 0.6)
    est, _ = D.symmetric_difference_estimate(c1, c2)
    assert D.symmetric_difference_measure(c1, c2) == pytest.approx(est, rel=2e-3)


def test_symdiff_dimension_mismatch():
    with pytest.raises(ValueError):
        D.symmetric_difference_measure(D.Box((0.0,), (1.0,)), square())


_shapes = st.one_of(
    st.builds(lambda x, y, w, h: D.Box((x, y), (x + w, y + h)),
              st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.2, 1.0), st.floats(0.2, 1.0)),
    st.builds(lambda x, y, r: D.Ball((x, y), r), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.2, 0.7)),
)


@settings(max_examples=25, deadline=None)
@given(_shapes, _shapes, _shapes)
def test_symdiff_triangle_inequality(a, b, c):
    ac = D.symmetric_difference_measure(a, c)
    ab = D.symmetric_difference_measure(a, b)
    bc = D.symmetric_difference_measure(b, c)
    # counting estimates are accurate to ~1e-3 relative; allow twice that
    slack = 2 * 2e-3 * max(D.measure(a) + D.measure(b) + D.measure(c), 1.0)
    assert ac <= ab + bc + slack


def test_ball_boundary_quadrature():
    q = D.boundary_quadrature(D.Ball((0.0, 0.0), 1.0), 100)
    assert q.weights.sum() == pytest.approx(2.0 * math.pi, abs=1e-10)
    np.testing.assert_allclose(q.normals, q.points, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(q.normals, axis=1), 1.0)


def test_box_boundary_quadrature():
    q = D.boundary_quadrature(square(), 400)
    assert len(q) == 400
    assert q.weights.sum() == pytest.approx(4.0, abs=1e-12)
    assert not q.smooth


def test_union_boundary_quadrature_length():
    u = D.UnionOfBalls((D.Ball((0.0, 0.0), 0.5), D.Ball((2.0, 0.0), 0.25)))
    q = D.boundary_quadrature(u, 300)
    assert q.weights.sum() == pytest.approx(2.0 * math.pi * 0.75, rel=1e-12)


@pytest.mark.parametrize("d", [
    D.Ball((0.2, -0.1), 0.8),
    D.Mapped(D.Ball((0.0, 0.0), 1.0), D.AffineDiagonal((1.5, 0.6))),
    D.Mapped(D.Ball((0.0, 0.0), 1.0), D.PerturbationField(D.VectorField("radial_bump"), 0.1)),
])
def test_normals_point_outward(d):
    q = D.boundary_quadrature(d, 128)
    tau = 1e-4 * D.diameter(d)
    assert not np.any(d.contains(q.points + tau * q.normals))
    assert np.all(d.contains(q.points - tau * q.normals))


def test_ellipse_perimeter_via_nanson():
    a, b = 1.5, 0.6
    d = D.Mapped(D.Ball((0.0, 0.0), 1.0), D.AffineDiagonal((a, b)))
    q = D.boundary_quadrature(d, 2000)
    theta = np.linspace(0.0, 2.0 * np.pi, 200001)
    exact = np.trapezoid(np.hypot(a * np.sin(theta), b * np.cos(theta)), theta)
    assert q.weights.sum() == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("d", [D.Rough(3), D.Perforated(0.25, 0.25, square())])
def test_boundary_quadrature_refuses_rough_sets(d):
    with pytest.raises(ValueError):
        D.boundary_quadrature(d, 64)


def test_boundary_quadrature_needs_enough_samples():
    with pytest.raises(ValueError):
        D.boundary_quadrature(D.Ball((0.0, 0.0), 1.0), 4)


def test_ball_of_same_measure():
    assert D.ball_of_same_measure(square()).radius == pytest.approx(1.0 / math.sqrt(math.pi))
    assert D.ball_of_same_measure(D.Ball((3.0, 1.0), 2.0)).radius == pytest.approx(2.0)
    assert D.ball_of_same_measure(D.Rough(7)).radius == pytest.approx(1.0 / math.sqrt(math.pi))
    assert D.ball_of_same_measure(D.Box((0.0,), (3.0,))).radius == pytest.approx(1.5)


def test_membership_is_open():
    assert not square().contains([1.0, 0.5])
    assert not D.Ball((0.0, 0.0), 1.0).contains([1.0, 0.0])
    assert not D.Rough(2).contains([0.5, 1.0])
    assert square().contains([0.5, 0.5])


def test_union_must_be_disjoint():
    with pytest.raises(ValueError):
        D.UnionOfBalls((D.Ball((0.0, 0.0), 0.5), D.Ball((1.0, 0.0), 0.5)))


def test_perforated_chi_and_holes():
    p = D.Perforated(0.25, 0.25, square())
    assert p.chi == 0.75
    assert p.hole_side == pytest.approx(0.5)
    assert p.in_hole([0.125, 0.125])
    assert p.in_hole([0.0625, 0.0625])
    assert not p.in_hole([0.05, 0.125])
    assert p.exact_measure() == pytest.approx(0.75)
    n = 256
    x = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    assert p.contains(pts).mean() == pytest.approx(0.75)


def test_perforated_ball_hole_fraction():
    p = D.Perforated(0.5, 0.2, square(), hole="ball")
    est, _ = D._refine(p.contains, *p.bbox())
    assert est == pytest.approx(0.8, abs=2e-3)


def test_map_injectivity_checks():
    with pytest.raises(ValueError, match="map_injective"):
        D.Mapped(square(), D.AffineDiagonal((1.0, 0.0)))
    with pytest.raises(ValueError, match="jacobian_positive"):
        D.check_injective(D.PerturbationField(D.VectorField("radial_bump"), -1.0), (-0.05, -0.05), (0.05, 0.05))
    with pytest.raises(ValueError):
        D.Mapped(square(), D.PerturbationField(D.VectorField("dilation"), -1.0))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["dilation", "rotation", "radial_bump"]), st.floats(-0.3, 0.3),
       st.floats(-1, 1), st.floats(-1, 1))
def test_perturbation_inverse_roundtrip(name, t, x, y):
    m = D.PerturbationField(D.VectorField(name), t)
    p = np.array([[x, y]])
    np.testing.assert_allclose(m.inverse(m.apply(p)), p, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["dilation", "rotation", "radial_bump"]), st.floats(-1, 1), st.floats(-1, 1))
def test_field_jacobian_matches_differences(name, x, y):
    V = D.VectorField(name)
    p = np.array([x, y])
    eps = 1e-6
    fd = np.stack([(V(p + eps * e) - V(p - eps * e)) / (2 * eps) for e in np.eye(2)], axis=1)
    np.testing.assert_allclose(V.jacobian(p), fd, atol=1e-8)


def test_polygon_domain():
    tri = D.Polygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    assert D.measure(tri) == pytest.approx(0.5)
    assert tri.contains([0.2, 0.2]) and not tri.contains([0.6, 0.6])
    q = D.boundary_quadrature(tri, 64)
    assert q.weights.sum() == pytest.approx(2.0 + math.sqrt(2.0))


def test_boundary_polygon_of_mapped_ball_area():
    d = D.Mapped(D.Ball((0.0, 0.0), 1.0), D.AffineDiagonal((2.0, 0.5)))
    assert shapely.area(D.boundary_polygon(d, 4096)) == pytest.approx(math.pi, rel=1e-5)


@pytest.mark.parametrize("desc", [
    {"variant": "rough", "n": 8},
    {"variant": "perforated", "eps": 0.25, "hole_fraction": 0.25, "base": [[0, 1], [0, 1]]},
    {"variant": "box", "lo": [0, 0], "hi": [2, 0.5]},
    {"variant": "ball", "center": [0, 0], "radius": 1},
    {"variant": "union_of_balls", "balls": [{"center": [0, 0], "radius": 0.5}, {"center": [2, 0], "radius": 0.5}]},
    {"variant": "mapped", "base": {"variant": "box", "lo": [0, 0], "hi": [1, 1]},
     "map": {"kind": "perturbation_field", "field": {"name": "radial_bump"}, "t": 0.1}},
    {"variant": "polygon", "vertices": [[0, 0], [1, 0], [0, 1]]},
])
def test_descriptor_roundtrip(desc):
    d = D.domain_from_dict(desc)
    assert D.domain_from_dict(d.to_dict()) == d


def test_unknown_variant():
    with pytest.raises(ValueError):
        D.domain_from_dict({"variant": "torus"})
