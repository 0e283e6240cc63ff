"""P1 finite elements on the volume mesh and on its boundary complex."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyError, NumericalError
from .mesh import ScalarField, SimplicialMesh


def p1_gradients(points: np.ndarray):
    """Gradients of the barycentric coordinates on a batch of simplices.

    ``points`` has shape ``(m, d+1, n)`` with ``d <= n``; gradients are taken
    within the affine hull of each simplex.  Returns ``(grads, measures)``
    with ``grads`` of shape ``(m, d+1, n)``.
    """
    m, d1, n = points.shape
    d = d1 - 1
    E = points[:, 1:] - points[:, :1]  # (m, d, n)
    gram = E @ E.transpose(0, 2, 1)
    det = np.linalg.det(gram)
    measure = np.sqrt(np.maximum(det, 0.0)) / math.factorial(d)
    bad = measure <= 1e-14 * np.max(np.abs(E), axis=(1, 2)) ** d
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"degenerate simplex {i} (measure {measure[i]:.3e})", index=i)
    g = np.linalg.solve(gram, E)  # rows: gradients of lambda_1..lambda_d
    grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
    return grads, measure


def _scatter(conn: np.ndarray, local: np.ndarray, size: int) -> sp.csr_matrix:
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def _stiffness(points: np.ndarray, conn: np.ndarray, size: int) -> sp.csr_matrix:
    grads, meas = p1_gradients(points)
    local = meas[:, None, None] * np.einsum("mik,mjk->mij", grads, grads)
    return _scatter(conn, local, size)


def _mass(points: np.ndarray, conn: np.ndarray, size: int) -> sp.csr_matrix:
    _, meas = p1_gradients(points)
    d = conn.shape[1] - 1
    ref = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return _scatter(conn, meas[:, None, None] * ref, size)


def assemble_stiffness(mesh: SimplicialMesh) -> sp.csr_matrix:
    """``A_ij = int grad(phi_i) . grad(phi_j) dv``."""
    return _stiffness(mesh.vertices[mesh.cells], mesh.cells, mesh.n_vertices)


def assemble_boundary_mass(mesh: SimplicialMesh) -> sp.csr_matrix:
    """``B_ij = int_boundary phi_i phi_j da`` as an operator on all vertices."""
    f = mesh.boundary_facets
    return _mass(mesh.vertices[f], f, mesh.n_vertices)


def assemble_surface_laplacian(mesh: SimplicialMesh):
    """P1 stiffness ``L`` and mass ``M`` of the boundary complex.

    Both act on boundary vertices in the order of ``mesh.boundary_vertices``.
    """
    bv = mesh.boundary_vertices
    local = np.searchsorted(bv, mesh.boundary_facets)
    pts = mesh.vertices[mesh.boundary_facets]
    return _stiffness(pts, local, len(bv)), _mass(pts, local, len(bv))


class FEMSystem:
    """Assembled operators of one mesh plus a cached interior factorization."""

    def __init__(self, mesh: SimplicialMesh):
        self.mesh = mesh
        self.A = assemble_stiffness(mesh)
        self.B = assemble_boundary_mass(mesh)
        self.L, self.M = assemble_surface_laplacian(mesh)
        self.bidx = mesh.boundary_vertices
        self.iidx = mesh.interior_vertices
        A = self.A
        self.A_II = A[self.iidx][:, self.iidx].tocsc()
        self.A_IB = A[self.iidx][:, self.bidx].tocsc()
        self.A_BB = A[self.bidx][:, self.bidx].tocsr()
        self.B_BB = self.B[self.bidx][:, self.bidx].tocsr()
        self._lu = None
        grads, vol = p1_gradients(mesh.vertices[mesh.cells])
        self.cell_grads = grads
        self.cell_volumes = vol
        self.facet_normals = mesh.facet_normals()
        self.facet_measures = mesh.facet_measures()

    @property
    def lu(self):
        if self._lu is None:
            if len(self.iidx) == 0:
                raise NumericalError("mesh has no interior vertices")
            try:
                self._lu = splu(self.A_II, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise NumericalError(f"interior factorization failed: {exc}") from exc
        return self._lu

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.asarray(rhs, dtype=float))

    def extend(self, g: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Discrete harmonic extension of boundary values (columns of ``g``)."""
        g = np.asarray(g, dtype=float)
        rhs = -(self.A_IB @ g)
        ui = self.solve_interior(rhs)
        res = self.A_II @ ui - rhs
        rel = np.linalg.norm(res, axis=0) / np.maximum(np.linalg.norm(rhs, axis=0), 1e-300)
        if np.any(rel > tol):
            raise NumericalError("harmonic extension residual too large",
                                 {"relative_residual": float(np.max(rel))})
        u = np.empty((self.mesh.n_vertices,) + g.shape[1:])
        u[self.bidx] = g
        u[self.iidx] = ui
        return u

    def normal_derivatives(self, u: np.ndarray) -> np.ndarray:
        """Per-facet normal derivative from the gradient in the incident cell."""
        u = np.asarray(u, dtype=float)
        cells = self.mesh.cells[self.mesh.facet_cells]
        grads = self.cell_grads[self.mesh.facet_cells]
        gu = np.einsum("fi...,fik->fk...", u[cells], grads)
        return np.einsum("fk...,fk->f...", gu, self.facet_normals)

    def functionals(self, u) -> dict:
        u = np.asarray(u, dtype=float)
        ub = u[self.bidx]
        dn = self.normal_derivatives(u)
        return {
            "dirichlet_energy": float(u @ (self.A @ u)),
            "boundary_l2": float(u @ (self.B @ u)),
            "normal_derivative_l2": float(np.sum(self.facet_measures * dn * dn)),
            "tangential_gradient_l2": float(ub @ (self.L @ ub)),
        }


def system(mesh: SimplicialMesh) -> FEMSystem:
    """The (cached) assembled system of ``mesh``."""
    sys_ = mesh._cache.get("fem")
    if sys_ is None:
        sys_ = FEMSystem(mesh)
        mesh._cache["fem"] = sys_
    return sys_


def _boundary_values(mesh: SimplicialMesh, data) -> np.ndarray:
    g = np.asarray(data, dtype=float)
    nb = len(mesh.boundary_vertices)
    if g.shape[0] == mesh.n_vertices and g.shape[0] != nb:
        g = g[mesh.boundary_vertices]
    if g.shape[0] != nb:
        raise ValueError(f"boundary data must have {nb} (boundary) or {mesh.n_vertices} entries")
    if not np.all(np.isfinite(g)):
        raise ValueError("boundary data must be finite")
    return g


def harmonic_extension(mesh: SimplicialMesh, boundary_data) -> ScalarField:
    """Solve the interior equations of ``A u = 0`` with Dirichlet data on the boundary.

    ``boundary_data`` is indexed like ``mesh.boundary_vertices`` or holds one
    value per vertex (only boundary entries are read).
    """
    g = _boundary_values(mesh, boundary_data)
    if g.ndim != 1:
        raise ValueError("use FEMSystem.extend for several data sets at once")
    return ScalarField(mesh, system(mesh).extend(g))


def functionals(mesh: SimplicialMesh, u) -> dict:
    """Dirichlet energy, boundary L2 norm, normal-derivative and tangential-gradient norms.

    All four are squared norms: ``u'Au``, ``u'Bu``, the facet-wise integral
    of ``(du/dnu)^2`` using the incident cell gradient, and ``u_b' L u_b``.
    """
    return system(mesh).functionals(u)


def green_flux_pairing(mesh: SimplicialMesh, u, v) -> float:
    """``sum_F (du/dnu)_F int_F v da`` for comparison with ``u'Av``."""
    s = system(mesh)
    dn = s.normal_derivatives(u)
    vbar = np.asarray(v, dtype=float)[mesh.boundary_facets].mean(axis=1)
    return float(np.sum(dn * s.facet_measures * vbar))
