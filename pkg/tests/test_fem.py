import math

import numpy as np
import pytest

from steklov.errors import AssemblyError
from steklov.fem import (_mass, _stiffness, assemble_boundary_mass, assemble_stiffness,
                         assemble_surface_laplacian, functionals, green_flux_pairing,
                         harmonic_extension, p1_gradients, system)
from steklov.mesh import generate
from steklov.shapes import Ball


def test_reference_triangle_stiffness():
    pts = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    A = _stiffness(pts, np.array([[0, 1, 2]]), 3).toarray()
    assert np.allclose(A, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_segment_mass():
    h = 0.3
    pts = np.array([[[0.0, 0.0], [h, 0.0]]])
    M = _mass(pts, np.array([[0, 1]]), 2).toarray()
    assert np.allclose(M, [[h / 3, h / 6], [h / 6, h / 3]], atol=1e-15)


def test_degenerate_simplex():
    pts = np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]])
    with pytest.raises(AssemblyError) as err:
        p1_gradients(pts)
    assert err.value.index == 0


@pytest.mark.parametrize("fixture", ["disk_coarse", "ball3_coarse"])
def test_operator_properties(fixture, request):
    mesh = request.getfixturevalue(fixture)
    A = assemble_stiffness(mesh)
    B = assemble_boundary_mass(mesh)
    L, M = assemble_surface_laplacian(mesh)
    for K in (A, B, L, M):
        assert abs(K - K.T).max() <= 1e-13 * abs(K).max()
    ones = np.ones(mesh.n_vertices)
    assert np.linalg.norm(A @ ones) <= 1e-10 * abs(A).sum(axis=1).max()
    ob = np.ones(L.shape[0])
    assert np.linalg.norm(L @ ob) <= 1e-10 * abs(L).sum(axis=1).max()
    assert ones @ (B @ ones) == pytest.approx(mesh.boundary_measure(), rel=1e-12)
    interior = np.zeros(mesh.n_vertices)
    interior[mesh.interior_vertices] = 1.0
    assert interior @ (B @ interior) == 0.0
    # positive semidefinite
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(mesh.n_vertices)
        assert v @ (A @ v) >= 0 and v @ (B @ v) >= 0


def test_energy_of_x(disk_coarse):
    A = assemble_stiffness(disk_coarse)
    x = disk_coarse.vertices[:, 0]
    assert x @ (A @ x) == pytest.approx(math.pi, rel=0.01)


def test_circle_rayleigh(disk_coarse):
    L, M = assemble_surface_laplacian(disk_coarse)
    z = disk_coarse.vertices[disk_coarse.boundary_vertices, 0]
    assert (z @ (L @ z)) / (z @ (M @ z)) == pytest.approx(1.0, rel=0.01)


def test_sphere_rayleigh():
    m = generate(Ball(1.0, n=3), target_h=0.15)
    L, M = assemble_surface_laplacian(m)
    z = m.vertices[m.boundary_vertices, 0]
    assert (z @ (L @ z)) / (z @ (M @ z)) == pytest.approx(2.0, rel=0.02)


def test_harmonic_extension_reproduces_linear(disk_coarse):
    x = disk_coarse.vertices
    g = 3 * x[:, 0] - 2 * x[:, 1] + 0.5
    u = harmonic_extension(disk_coarse, g)
    assert np.abs(np.asarray(u) - g).max() < 1e-12
    assert np.allclose(u.boundary, g[disk_coarse.boundary_vertices])


def test_harmonic_extension_bad_data(disk_coarse):
    with pytest.raises(ValueError):
        harmonic_extension(disk_coarse, np.full(disk_coarse.n_vertices, np.nan))
    with pytest.raises(ValueError):
        harmonic_extension(disk_coarse, np.ones(7))


def test_functionals_for_x(disk_fine):
    u = harmonic_extension(disk_fine, disk_fine.vertices[:, 0])
    fun = functionals(disk_fine, u)
    for key in ("dirichlet_energy", "boundary_l2", "normal_derivative_l2",
                "tangential_gradient_l2"):
        assert fun[key] == pytest.approx(math.pi, rel=0.01)


def test_green_identity(disk_fine):
    x = disk_fine.vertices
    r2 = x[:, 0] ** 2 - x[:, 1] ** 2
    u = np.asarray(harmonic_extension(disk_fine, r2))
    v = np.asarray(harmonic_extension(disk_fine, x[:, 0] * x[:, 1] + x[:, 0]))
    A = system(disk_fine).A
    lhs = u @ (A @ v)
    lhs_uu = u @ (A @ u)
    assert abs(green_flux_pairing(disk_fine, u, u) - lhs_uu) / abs(lhs_uu) <= 0.05
    assert abs(green_flux_pairing(disk_fine, u, v) - lhs) <= 0.05 * lhs_uu
