"""Integral identities, key inequalities and the Hessian comparison for the weight V."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import sympy
from scipy.stats import qmc

from .errors import ContractError, CoverageError, DegenerateInputError, UnsupportedShapeError
from .fem import _boundary_values, system
from .mesh import ScalarField, SimplicialMesh
from .quadrature import boundary_quadrature, volume_chunks
from .shapes import (Ball, Ellipsoid, _Quadric, cut_locus_gap, min_principal_curvature,
                     signed_projection, weight_V)

_SYMBOLS = ("x", "y", "z")


class ClosedForm:
    """A smooth function of the coordinates with exact gradient and Hessian.

    ``expr`` is a sympy expression or a string in the variables ``x, y``
    (2D) or ``x, y, z`` (3D).
    """

    def __init__(self, expr, dim: int):
        if dim not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        self.dim = dim
        self.symbols = sympy.symbols(_SYMBOLS[:dim])
        if isinstance(expr, str):
            expr = sympy.sympify(expr, locals={s.name: s for s in self.symbols})
        expr = sympy.sympify(expr)
        extra = expr.free_symbols - set(self.symbols)
        if extra:
            raise ValueError(f"unknown symbols {sorted(map(str, extra))}")
        self.expr = expr
        grad = [sympy.diff(expr, s) for s in self.symbols]
        hess = [[sympy.diff(g, s) for s in self.symbols] for g in grad]
        self.laplacian_expr = sympy.simplify(sum(hess[i][i] for i in range(dim)))
        self._f = sympy.lambdify(self.symbols, expr, "numpy")
        self._g = sympy.lambdify(self.symbols, grad, "numpy")
        self._h = sympy.lambdify(self.symbols, hess, "numpy")

    def __repr__(self):
        return f"ClosedForm({str(self.expr)!r}, dim={self.dim})"

    @property
    def is_harmonic(self) -> bool:
        return self.laplacian_expr == 0

    def _args(self, x):
        x = np.asarray(x, dtype=float)
        return [x[..., i] for i in range(self.dim)], x.shape[:-1]

    def value(self, x) -> np.ndarray:
        args, shp = self._args(x)
        return np.broadcast_to(np.asarray(self._f(*args), dtype=float), shp).copy()

    def gradient(self, x) -> np.ndarray:
        args, shp = self._args(x)
        g = self._g(*args)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), shp) for c in g], axis=-1)

    def hessian(self, x) -> np.ndarray:
        args, shp = self._args(x)
        h = self._h(*args)
        rows = [np.stack([np.broadcast_to(np.asarray(c, dtype=float), shp) for c in r], axis=-1)
                for r in h]
        return np.stack(rows, axis=-2)


def quadric_weight(shape: _Quadric) -> ClosedForm:
    """``(a_n/2)(1 - sum(((x - x0)/a)**2))``: a smooth weight vanishing on the boundary.

    On a ball of radius ``R`` this is exactly ``rho - rho**2/(2R)``.
    """
    a = shape.axes_array
    c = shape.center_array
    syms = sympy.symbols(_SYMBOLS[: shape.dim])
    s = sum(((v - sympy.Float(ci)) / sympy.Float(ai)) ** 2 for v, ai, ci in zip(syms, a, c))
    expr = sympy.Float(a[-1]) / 2 * (1 - s)
    if isinstance(shape, Ball):
        R = sympy.nsimplify(shape.radius)
        expr = (R**2 - sum((v - sympy.nsimplify(ci)) ** 2 for v, ci in zip(syms, c))) / (2 * R)
    return ClosedForm(expr, shape.dim)


def _as_closed_form(obj, dim: int, name: str) -> ClosedForm:
    if isinstance(obj, ClosedForm):
        if obj.dim != dim:
            raise ContractError(f"{name} is {obj.dim}-dimensional, mesh is {dim}-dimensional")
        return obj
    if isinstance(obj, (str, sympy.Expr)):
        return ClosedForm(obj, dim)
    if isinstance(obj, (ScalarField, np.ndarray)):
        raise ContractError(f"{name} needs exact second derivatives; pass a closed form")
    raise ContractError(f"cannot use {type(obj).__name__} as {name}")


def _geometry(mesh: SimplicialMesh, curved: bool, order: int):
    shape = mesh.shape
    if not isinstance(shape, _Quadric):
        raise UnsupportedShapeError("identities need an analytic ball or ellipsoid")
    bq = boundary_quadrature(mesh, order, curved)
    return volume_chunks(mesh, order, curved), bq, shape.normal(bq.points), shape


def reilly_residual(mesh: SimplicialMesh, f, V, curved: bool = True, order: int = 4) -> dict:
    """Both sides of the weighted Reilly formula on a flat domain.

    lhs = int V((lap f)**2 - |Hess f|**2) and rhs is the sum of
    ``boundary_weighted`` = int_S V (2 f_nu lap_S f + H f_nu**2 + h(grad_S f, grad_S f)),
    ``boundary_flux`` = int_S V_nu |grad_S f|**2 and
    ``volume_hessian`` = int (Hess V - lap V I)(grad f, grad f).
    """
    n = mesh.dim
    f = _as_closed_form(f, n, "f")
    V = _as_closed_form(V, n, "V")
    vq, bq, nu, shape = _geometry(mesh, curved, order)

    lhs = t_vol = 0.0
    for q in vq:
        x = q.points
        Hf = f.hessian(x)
        lap_f = np.trace(Hf, axis1=-2, axis2=-1)
        gf = f.gradient(x)
        HV = V.hessian(x)
        lap_V = np.trace(HV, axis1=-2, axis2=-1)
        lhs += np.sum(q.weights * V.value(x) * (lap_f**2 - np.sum(Hf * Hf, axis=(-2, -1))))
        quad = np.einsum("mi,mij,mj->m", gf, HV, gf) - lap_V * np.sum(gf * gf, axis=-1)
        t_vol += np.sum(q.weights * quad)

    y = bq.points
    gf = f.gradient(y)
    Hf = f.hessian(y)
    f_nu = np.sum(gf * nu, axis=-1)
    grad_s = gf - f_nu[:, None] * nu
    H = shape.mean_curvature(y)
    lap_s = np.trace(Hf, axis1=-2, axis2=-1) - np.einsum("mi,mij,mj->m", nu, Hf, nu) - H * f_nu
    hform = shape.second_fundamental_form(y, grad_s, grad_s)
    t_bw = np.sum(bq.weights * V.value(y) * (2 * f_nu * lap_s + H * f_nu**2 + hform))
    V_nu = np.sum(V.gradient(y) * nu, axis=-1)
    t_flux = np.sum(bq.weights * V_nu * np.sum(grad_s * grad_s, axis=-1))
    rhs = t_bw + t_flux + t_vol
    return {
        "lhs": float(lhs),
        "rhs": float(rhs),
        "residual": float(lhs - rhs),
        "terms": {"boundary_weighted": float(t_bw), "boundary_flux": float(t_flux),
                  "volume_hessian": float(t_vol)},
        "h": mesh.h,
    }


def pohozaev_residual(mesh: SimplicialMesh, f, V, curved: bool = True, order: int = 4) -> dict:
    """Both sides of the Pohozaev identity for harmonic ``f`` and ``X = grad V``.

    lhs = int (<D_{grad f} X, grad f> - |grad f|**2 div X / 2),
    rhs = int_S (f_nu <X, grad f> - |grad f|**2 <X, nu> / 2).
    """
    n = mesh.dim
    f = _as_closed_form(f, n, "f")
    V = _as_closed_form(V, n, "V")
    if not f.is_harmonic:
        raise ContractError(f"f = {f.expr} is not harmonic")
    vq, bq, nu, _ = _geometry(mesh, curved, order)

    lhs = 0.0
    for q in vq:
        gf = f.gradient(q.points)
        HV = V.hessian(q.points)
        integrand = np.einsum("mi,mij,mj->m", gf, HV, gf) \
            - 0.5 * np.sum(gf * gf, axis=-1) * np.trace(HV, axis1=-2, axis2=-1)
        lhs += np.sum(q.weights * integrand)

    y = bq.points
    gf = f.gradient(y)
    X = V.gradient(y)
    f_nu = np.sum(gf * nu, axis=-1)
    t_flux = np.sum(bq.weights * f_nu * np.sum(X * gf, axis=-1))
    t_normal = -0.5 * np.sum(bq.weights * np.sum(gf * gf, axis=-1) * np.sum(X * nu, axis=-1))
    rhs = t_flux + t_normal
    return {
        "lhs": float(lhs),
        "rhs": float(rhs),
        "residual": float(lhs - rhs),
        "terms": {"boundary_flux": float(t_flux), "boundary_normal": float(t_normal)},
        "h": mesh.h,
    }


def key_inequality_margins(mesh: SimplicialMesh, c: float, boundary_data) -> dict:
    """Signed margins of the two key inequalities for the harmonic extension of the data.

    margin1 = int_S f_nu**2 - c int |grad f|**2 and
    margin2 = int_S |grad_S f|**2 - (n-1) c int |grad f|**2.
    """
    s = system(mesh)
    g = _boundary_values(mesh, boundary_data)
    if np.ptp(g) <= 1e-14 * max(1.0, float(np.abs(g).max())):
        raise DegenerateInputError("boundary data are constant")
    u = s.extend(g)
    fun = s.functionals(u)
    E = fun["dirichlet_energy"]
    n = mesh.dim
    m1 = fun["normal_derivative_l2"] - c * E
    m2 = fun["tangential_gradient_l2"] - (n - 1) * c * E
    return {
        "margin1": m1,
        "margin2": m2,
        "relative_margin1": m1 / E,
        "relative_margin2": m2 / E,
        "functionals": fun,
        "h": mesh.h,
    }


def random_boundary_data(mesh: SimplicialMesh, count: int, seed: int = 0,
                         degree: int = 3) -> np.ndarray:
    """Seeded random polynomials of the scaled coordinates, one column per sample."""
    rng = np.random.default_rng(seed)
    shape = mesh.shape
    x = mesh.vertices[mesh.boundary_vertices]
    if isinstance(shape, _Quadric):
        x = (x - shape.center_array) / shape.axes_array
    n = mesh.dim
    exps = [e for e in np.ndindex(*(degree + 1,) * n) if 0 < sum(e) <= degree]
    mono = np.column_stack([np.prod(x ** np.array(e), axis=1) for e in exps])
    coef = rng.standard_normal((len(exps), count))
    return mono @ coef


@dataclass
class HessianReport:
    max_violation: float
    samples_used: int
    samples_excluded: int
    c: float
    step: float
    band: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _halton_inside(shape: _Quadric, count: int, seed: int) -> np.ndarray:
    n = shape.dim
    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    out = []
    got = 0
    while got < count:
        u = sampler.random(2 * count)
        p = shape.center_array + (2 * u - 1) * shape.axes_array
        p = p[shape.level(p) < 0]
        out.append(p)
        got += len(p)
    return np.vstack(out)[:count]


def hessian_comparison_check(shape, c: Optional[float] = None, sample_count: int = 2000,
                             band: float = 0.05, step: Optional[float] = None,
                             seed: int = 0) -> HessianReport:
    """Largest eigenvalue of ``Hess(V o rho) + c I`` over quasi-random interior samples.

    Samples whose competing foot point is within ``2 * band`` of being as
    near as the nearest one (the cut-locus band) are excluded, as are
    samples too close to the boundary for the difference stencil.  The step
    defaults to ``eps**(1/4)`` times the diameter.
    """
    if not isinstance(shape, (Ball, Ellipsoid)):
        raise UnsupportedShapeError("the Hessian comparison needs a ball or ellipsoid")
    if c is None:
        c = min_principal_curvature(shape)
    n = shape.dim
    if step is None:
        step = np.finfo(float).eps ** 0.25 * shape.diameter
    pts = _halton_inside(shape, sample_count, seed)
    proj = signed_projection(shape, pts)
    gap = cut_locus_gap(shape, pts, proj, separation=4.0 * band)
    keep = (gap > 2.0 * band) & (proj.rho > 4.0 * step)
    p = pts[keep]
    if len(p) == 0:
        raise CoverageError("every sample fell inside the exclusion band")

    def F(q):
        return weight_V(signed_projection(shape, q).rho, c)

    E = np.eye(n) * step
    f0 = F(p)
    H = np.empty((len(p), n, n))
    for i in range(n):
        H[:, i, i] = (F(p + E[i]) - 2 * f0 + F(p - E[i])) / step**2
        for j in range(i + 1, n):
            d = (F(p + E[i] + E[j]) - F(p + E[i] - E[j]) - F(p - E[i] + E[j])
                 + F(p - E[i] - E[j])) / (4 * step**2)
            H[:, i, j] = H[:, j, i] = d
    top = np.linalg.eigvalsh(H + c * np.eye(n))[:, -1]
    return HessianReport(float(top.max()), int(len(p)), int(len(pts) - len(p)), float(c),
                         float(step), float(band))
