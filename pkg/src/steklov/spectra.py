"""Steklov (Dirichlet-to-Neumann) and boundary Laplace-Beltrami spectra."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import DegenerateInputError, NumericalError
from .fem import _boundary_values, system
from .mesh import SimplicialMesh

DENSE_LIMIT = 5000
CLUSTER_RTOL = 1e-6


@dataclass
class SpectralResult:
    problem: str  # "steklov" or "boundary"
    eigenvalues: np.ndarray
    boundary_vectors: np.ndarray  # (n_boundary, k+1), mass-orthonormal
    residuals: np.ndarray
    h: float
    method: str
    iterations: Optional[int] = None
    extensions: Optional[np.ndarray] = None  # (n_vertices, k+1), steklov only
    meta: dict = field(default_factory=dict)

    def clusters(self, rtol: float = CLUSTER_RTOL) -> list:
        return cluster_indices(self.eigenvalues, rtol)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
            "h": float(self.h),
            "method": self.method,
            "iterations": self.iterations,
            "clusters": self.clusters(),
        }


def cluster_indices(values, rtol: float = CLUSTER_RTOL) -> list:
    """Group ascending eigenvalues whose relative gap is below ``rtol``."""
    values = np.asarray(values, dtype=float)
    scale = max(float(np.abs(values).max(initial=0.0)), 1e-300)
    groups = [[0]] if len(values) else []
    for i in range(1, len(values)):
        prev = values[groups[-1][-1]]
        if abs(values[i] - prev) <= rtol * max(abs(values[i]), abs(prev), 1e-12 * scale):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _residuals(K, M, vals, vecs) -> np.ndarray:
    """``|K x - mu M x| / ((|K|_inf + |mu| |M|_inf) |x|)`` per pair."""
    kn = _inf_norm(K)
    mn = _inf_norm(M)
    r = K @ vecs - (M @ vecs) * vals
    den = (kn + np.abs(vals) * mn) * np.linalg.norm(vecs, axis=0)
    return np.linalg.norm(r, axis=0) / den


def _inf_norm(K) -> float:
    if hasattr(K, "toarray"):
        return float(abs(K).sum(axis=1).max())
    return float(np.abs(K).sum(axis=1).max())


def _orient(vecs: np.ndarray) -> np.ndarray:
    """Fix eigenvector signs (largest-magnitude entry positive) for reproducible output."""
    idx = np.argmax(np.abs(vecs), axis=0)
    sgn = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    sgn[sgn == 0] = 1.0
    return vecs * sgn


def schur_dtn(mesh: SimplicialMesh, chunk_bytes: int = 160_000_000) -> np.ndarray:
    """Dense discrete Dirichlet-to-Neumann matrix ``A_BB - A_BI A_II^{-1} A_IB``."""
    s = system(mesh)
    nb = len(s.bidx)
    ni = len(s.iidx)
    S = s.A_BB.toarray()
    A_BI = s.A_IB.T.tocsr()
    step = max(1, int(chunk_bytes // (8 * max(ni, 1))))
    for start in range(0, nb, step):
        stop = min(nb, start + step)
        cols = s.A_IB[:, start:stop].toarray()
        S[:, start:stop] -= A_BI @ s.solve_interior(cols)
    return 0.5 * (S + S.T)


def steklov_spectrum(mesh: SimplicialMesh, k: int, dense_limit: int = DENSE_LIMIT) -> SpectralResult:
    """The ``k+1`` smallest eigenpairs of the discrete Dirichlet-to-Neumann pencil.

    Up to ``dense_limit`` boundary unknowns the Schur complement is formed
    densely and the pencil ``(S, B_bb)`` is solved exactly; beyond that the
    equivalent volume pencil ``(A, B)`` is solved by shift-invert Lanczos,
    whose interior rows are the harmonic-extension equations.
    """
    s = system(mesh)
    nb = len(s.bidx)
    if not 1 <= k <= nb - 1:
        raise ValueError(f"k must lie in [1, {nb - 1}]")
    if nb <= dense_limit:
        S = schur_dtn(mesh)
        Bbb = s.B_BB.toarray()
        try:
            vals, vecs = sla.eigh(S, Bbb, subset_by_index=[0, k])
        except sla.LinAlgError as exc:
            raise NumericalError(f"dense eigensolver failed: {exc}") from exc
        vecs = _orient(vecs)
        res = _residuals(S, Bbb, vals, vecs)
        ext = s.extend(vecs)
        method, iters = "schur-dense", None
    else:
        shift = -1.0 / mesh.shape.diameter if mesh.shape is not None else -0.1
        try:
            vals, ext = eigsh(s.A.tocsc(), k=k + 1, M=s.B.tocsc(), sigma=shift, which="LM", tol=1e-12)
        except ArpackNoConvergence as exc:
            raise NumericalError("Lanczos did not converge",
                                 {"converged": len(exc.eigenvalues)}) from exc
        order = np.argsort(vals)
        vals, ext = vals[order], ext[:, order]
        # re-normalize against the boundary mass and clean the interior block
        vecs = ext[s.bidx]
        norms = np.sqrt(np.einsum("ij,ij->j", vecs, s.B_BB @ vecs))
        vecs = _orient(vecs / norms)
        ext = s.extend(vecs)
        res = _residuals(s.A, s.B, vals, ext)
        method, iters = "volume-shift-invert", None
    vals = np.asarray(vals, dtype=float)
    return SpectralResult("steklov", vals, vecs, res, mesh.h, method, iters, ext)


def boundary_spectrum(mesh: SimplicialMesh, k: int, dense_limit: int = DENSE_LIMIT) -> SpectralResult:
    """The ``k+1`` smallest eigenpairs of ``L z = lambda M z`` on the boundary complex."""
    s = system(mesh)
    nb = len(s.bidx)
    if not 1 <= k <= nb - 1:
        raise ValueError(f"k must lie in [1, {nb - 1}]")
    if nb <= dense_limit:
        L, M = s.L.toarray(), s.M.toarray()
        vals, vecs = sla.eigh(L, M, subset_by_index=[0, k])
        method = "dense"
    else:
        L, M = s.L, s.M
        shift = -1.0 / mesh.shape.diameter**2 if mesh.shape is not None else -0.01
        try:
            vals, vecs = eigsh(L.tocsc(), k=k + 1, M=M.tocsc(), sigma=shift, which="LM", tol=1e-12)
        except ArpackNoConvergence as exc:
            raise NumericalError("Lanczos did not converge",
                                 {"converged": len(exc.eigenvalues)}) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"
    vecs = _orient(vecs)
    res = _residuals(L, M, vals, vecs)
    return SpectralResult("boundary", np.asarray(vals, float), vecs, res, mesh.h, method)


def eigenfunction_consistency(mesh: SimplicialMesh, result: SpectralResult) -> list:
    """Compare each Steklov pair with the flux and energy identities of an eigenfunction.

    For ``j >= 1`` reports the relative deviations of the normal-derivative
    norm from ``sigma_j**2`` times the boundary norm, and of the Dirichlet
    energy from ``sigma_j`` times the boundary norm.  The constant mode only
    reports the raw integrals.
    """
    if result.problem != "steklov" or result.extensions is None:
        raise ValueError("eigenfunction consistency needs a Steklov result")
    s = system(mesh)
    out = []
    for j, sig in enumerate(result.eigenvalues):
        fj = s.functionals(result.extensions[:, j])
        rec = {"j": j, "sigma": float(sig), **fj}
        if j == 0:
            rec["flux_deviation"] = None
            rec["energy_deviation"] = None
        else:
            b = fj["boundary_l2"]
            rec["flux_deviation"] = abs(fj["normal_derivative_l2"] - sig**2 * b) / (sig**2 * b)
            rec["energy_deviation"] = abs(fj["dirichlet_energy"] - sig * b) / (sig * b)
        out.append(rec)
    return out


def rayleigh_steklov(mesh: SimplicialMesh, boundary_data) -> float:
    """Energy of the harmonic extension over the boundary norm, after removing the mean."""
    s = system(mesh)
    g = _boundary_values(mesh, boundary_data)
    ones = np.ones_like(g)
    Bg = s.B_BB @ g
    g = g - (ones @ Bg) / (ones @ (s.B_BB @ ones))
    denom = float(g @ (s.B_BB @ g))
    if denom <= 1e-28 * max(1.0, float(np.abs(Bg).sum())):
        raise DegenerateInputError("boundary data vanish after mean removal")
    u = s.extend(g)
    return float(u @ (s.A @ u)) / denom


def minmax_upper_check(mesh: SimplicialMesh, j: int, c: Optional[float] = None,
                       boundary: Optional[SpectralResult] = None,
                       steklov: Optional[SpectralResult] = None) -> dict:
    """Upper bound for ``sigma_j`` from harmonic extensions of boundary eigenvectors.

    The span of the first ``j+1`` boundary eigenvectors, extended harmonically,
    is a trial space for the min-max characterization of ``sigma_j``; the
    bound is the top eigenvalue of its energy/boundary-mass pencil.
    """
    s = system(mesh)
    if boundary is None or len(boundary.eigenvalues) < j + 1:
        boundary = boundary_spectrum(mesh, max(j, 1))
    phi = boundary.boundary_vectors[:, : j + 1]
    f = s.extend(phi)
    E = f.T @ (s.A @ f)
    Sg = phi.T @ (s.B_BB @ phi)
    E = 0.5 * (E + E.T)
    Sg = 0.5 * (Sg + Sg.T)
    if np.linalg.cond(Sg) > 1e12:
        raise DegenerateInputError("boundary Gram matrix is rank deficient")
    bound = float(sla.eigh(E, Sg, eigvals_only=True)[-1])
    out = {"j": j, "bound": bound, "lambda_j": float(boundary.eigenvalues[j])}
    if c is not None:
        n = mesh.dim
        out["thm2_upper"] = float(boundary.eigenvalues[j]) / ((n - 1) * c)
        out["margin"] = out["thm2_upper"] - bound
    if steklov is not None and len(steklov.eigenvalues) > j:
        sj = float(steklov.eigenvalues[j])
        out["sigma_j"] = sj
        out["sigma_below_bound"] = bool(sj <= bound + 1e-10 * max(1.0, abs(bound)))
    return out
