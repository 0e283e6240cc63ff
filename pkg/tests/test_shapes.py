import math

import numpy as np
import pytest

from steklov.errors import DomainError, UnsupportedShapeError
from steklov.shapes import (Ball, Ellipsoid, RotSymProfile, cut_locus_gap, distance_field,
                            min_principal_curvature, parse_shape, shape_label, shape_to_dict,
                            signed_projection, weight_V)


def test_min_curvature_ball():
    assert min_principal_curvature(Ball(2.0)) == 0.5


def test_min_curvature_ellipse_matches_angular_sampling():
    assert min_principal_curvature(Ellipsoid((2.0, 1.0))) == pytest.approx(0.25, abs=1e-15)
    a, b = 2.0, 1.0
    th = np.linspace(0, 2 * np.pi, 200001)
    kappa = a * b / (a**2 * np.sin(th) ** 2 + b**2 * np.cos(th) ** 2) ** 1.5
    assert kappa.min() == pytest.approx(b / a**2, rel=1e-10)
    # minimum sits at the minor-axis endpoints (theta = pi/2, 3pi/2)
    assert abs(np.cos(th[np.argmin(kappa)])) < 1e-4


def test_min_curvature_ellipsoid_matches_weingarten_sampling():
    e = Ellipsoid((2.0, 1.5, 1.0))
    assert min_principal_curvature(e) == 0.25
    u, v = np.meshgrid(np.linspace(0, np.pi, 401), np.linspace(0, 2 * np.pi, 401))
    y = np.column_stack([2.0 * np.sin(u).ravel() * np.cos(v).ravel(),
                         1.5 * np.sin(u).ravel() * np.sin(v).ravel(), np.cos(u).ravel()])
    k = e.principal_curvatures(y)
    assert k.min() == pytest.approx(0.25, abs=1e-10)


def test_equal_axes_ellipsoid_is_ball():
    assert min_principal_curvature(Ellipsoid((1.7, 1.7, 1.7))) == pytest.approx(1 / 1.7, abs=1e-12)


def test_min_curvature_rejects_profile():
    with pytest.raises(UnsupportedShapeError):
        min_principal_curvature(RotSymProfile.flat(1.0))


def test_invalid_shapes():
    with pytest.raises(ValueError):
        Ball(-1.0)
    with pytest.raises(ValueError):
        Ellipsoid((1.0, 2.0))
    with pytest.raises(ValueError):
        RotSymProfile((0, 0.5, 1.0, 1.5), (0, -0.5, 1.0, 1.5))


def test_projection_examples():
    p = signed_projection(Ball(1.0), [0.0, 0.0])
    assert p.rho == 1.0 and p.degenerate
    assert np.linalg.norm(p.normal) == pytest.approx(1.0)
    assert signed_projection(Ball(2.0), [0.3, 0.4]).rho == pytest.approx(1.5)
    q = signed_projection(Ellipsoid((2.0, 1.0)), [0.0, 0.0])
    assert q.rho == pytest.approx(1.0, abs=1e-12)
    assert abs(q.foot[1]) == pytest.approx(1.0) and abs(q.foot[0]) < 1e-12


def test_projection_outside_raises():
    with pytest.raises(DomainError):
        signed_projection(Ellipsoid((2.0, 1.0)), [3.0, 0.0])


@pytest.mark.parametrize("axes", [(2.0, 1.0), (1.5, 1.2, 1.0), (3.0, 1.0, 1.0), (2.0, 2.0, 0.5)])
def test_projection_invariants(axes):
    e = Ellipsoid(axes)
    rng = np.random.default_rng(1)
    p = rng.uniform(-1, 1, (3000, len(axes))) * e.axes_array
    p = p[e.level(p) < 0]
    pr = signed_projection(e, p)
    assert np.abs(e.level(pr.foot)).max() < 1e-10
    d = p - pr.foot
    ok = pr.rho > 1e-9
    cross = d[ok] - np.sum(d[ok] * pr.normal[ok], axis=1)[:, None] * pr.normal[ok]
    assert np.abs(cross).max() < 1e-8
    assert np.allclose(np.linalg.norm(d, axis=1), pr.rho)
    # true distance is a minimum over dense boundary samples
    if len(axes) == 2:
        th = np.linspace(0, 2 * np.pi, 20001)
        b = np.column_stack([axes[0] * np.cos(th), axes[1] * np.sin(th)])
        dmin = np.min(np.linalg.norm(p[:200, None] - b[None], axis=2), axis=1)
        assert np.all(pr.rho[:200] <= dmin + 1e-9)
        assert np.allclose(pr.rho[:200], dmin, atol=1e-5)


def test_weight_examples():
    assert weight_V(0.0, 1.0) == 0.0
    assert weight_V(1.0, 1.0) == 0.5
    c = 0.3
    assert weight_V(1 / c, c) == pytest.approx(1 / (2 * c))
    r = np.linspace(1e-6, 1 / c, 100)
    assert np.all(weight_V(r, c) > 0) and np.all(1 - c * r >= -1e-15)


def test_distance_field(disk_coarse, ellipse_mesh):
    d = distance_field(Ball(1.0, n=2), disk_coarse)
    assert d.rho_max == pytest.approx(1.0, abs=1e-6)
    assert np.all(d.rho[disk_coarse.boundary_vertices] == 0.0)
    assert np.all(d.rho >= 0)
    de = distance_field(Ellipsoid((2.0, 1.0)), ellipse_mesh)
    h = ellipse_mesh.h
    assert de.rho_max <= 4.0 + 1e-6
    assert de.rho_max <= 1 / 0.25 + 10 * h * h
    assert np.all(de.rho[ellipse_mesh.boundary_vertices] == 0.0)
    # the flagged band hugs the major-axis segment |x| < 1.5
    flagged = ellipse_mesh.vertices[de.near_cut]
    assert len(flagged) > 0 and np.abs(flagged[:, 1]).max() < 0.3


def test_cut_locus_gap_ball_uses_antipode():
    b = Ball(1.0, n=2)
    pts = np.array([[0.5, 0.001], [0.01, 0.0]])
    gap = cut_locus_gap(b, pts)
    assert gap == pytest.approx(2 * np.linalg.norm(pts, axis=1))


def test_parse_and_label():
    assert parse_shape("ball:R=1,n=3") == Ball(1.0, 3)
    assert parse_shape({"type": "ball", "R": 1.0, "n": 2}) == Ball(1.0, 2)
    assert parse_shape("ellipse:2,1") == Ellipsoid((2.0, 1.0))
    assert parse_shape('{"type": "ellipsoid", "axes": [1.5, 1.2, 1]}') == Ellipsoid((1.5, 1.2, 1.0))
    assert shape_label(Ball(1.0, 2)) == "ball(n=2,R=1)"
    assert parse_shape(shape_to_dict(Ellipsoid((2.0, 1.0)))) == Ellipsoid((2.0, 1.0))
    with pytest.raises(UnsupportedShapeError):
        parse_shape({"type": "torus"})


def test_profiles():
    f = RotSymProfile.flat(2.0)
    assert f.R == 2.0 and f.spline(1.3) == pytest.approx(1.3)
    cap = RotSymProfile.spherical_cap(1.0)
    assert cap.spline(0.5) == pytest.approx(math.sin(0.5), abs=1e-8)
