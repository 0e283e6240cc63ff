"""Conical-product Gauss rules on simplices and curved cell/facet quadrature."""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import roots_jacobi

from .mesh import SimplicialMesh


class Rule(NamedTuple):
    bary: np.ndarray  # (q, d+1) barycentric coordinates
    weights: np.ndarray  # (q,), summing to 1


@lru_cache(maxsize=None)
def simplex_rule(d: int, order: int = 4) -> Rule:
    """Stroud conical product rule on the ``d``-simplex, exact to degree ``2*order - 1``.

    Collapsed coordinates ``t_1..t_d`` use Gauss-Jacobi nodes with weight
    ``(1 - t)**(d - i)`` so that the Duffy Jacobian is integrated exactly.
    """
    if d == 0:
        return Rule(np.ones((1, 1)), np.ones(1))
    nodes, wts = [], []
    for i in range(d):
        alpha = d - 1 - i
        x, w = roots_jacobi(order, alpha, 0.0)
        nodes.append(0.5 * (x + 1.0))
        wts.append(w / w.sum())
    grids = np.meshgrid(*nodes, indexing="ij")
    t = np.column_stack([g.ravel() for g in grids])
    w = np.ones(len(t))
    for wg in np.meshgrid(*wts, indexing="ij"):
        w *= wg.ravel()
    # t -> point of the unit simplex
    pts = np.zeros((len(t), d))
    rem = np.ones(len(t))
    for i in range(d):
        pts[:, i] = t[:, i] * rem
        rem = rem * (1.0 - t[:, i])
    bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
    return Rule(bary, w)


class QuadPoints(NamedTuple):
    points: np.ndarray  # (m, n)
    weights: np.ndarray  # (m,), physical measure weights


def _chart_points(mesh: SimplicialMesh, simplices: np.ndarray, rule: Rule):
    ref = mesh.ref_vertices[simplices]  # (s, d+1, n)
    xi = np.einsum("qa,san->sqn", rule.bary, ref)
    x, jac = mesh.shape.chart_jacobian(xi)
    return ref, x, jac


def volume_quadrature(mesh: SimplicialMesh, order: int = 4, curved: bool = True,
                      cells: slice = slice(None)) -> QuadPoints:
    """Quadrature over the domain (or over the cells selected by ``cells``).

    With ``curved`` and a chart available, cells are integrated as images of
    reference simplices under the exact chart, so the rule sees the true
    domain; otherwise the affine cells are used.
    """
    n = mesh.dim
    rule = simplex_rule(n, order)
    if curved and mesh.ref_vertices is not None and mesh.shape is not None:
        ref, x, jac = _chart_points(mesh, mesh.cells[cells], rule)
        ref_vol = np.abs(np.linalg.det(ref[:, 1:] - ref[:, :1])) / math.factorial(n)
        w = ref_vol[:, None] * rule.weights[None, :] * np.abs(np.linalg.det(jac))
        return QuadPoints(x.reshape(-1, n), w.ravel())
    p = mesh.vertices[mesh.cells[cells]]
    x = np.einsum("qa,san->sqn", rule.bary, p)
    vol = np.abs(np.linalg.det(p[:, 1:] - p[:, :1])) / math.factorial(n)
    return QuadPoints(x.reshape(-1, n), (vol[:, None] * rule.weights[None, :]).ravel())


def boundary_quadrature(mesh: SimplicialMesh, order: int = 4, curved: bool = True) -> QuadPoints:
    """Quadrature over the boundary surface; points lie on the exact surface when curved."""
    n = mesh.dim
    rule = simplex_rule(n - 1, order)
    f = mesh.boundary_facets
    if curved and mesh.ref_vertices is not None and mesh.shape is not None:
        ref, x, jac = _chart_points(mesh, f, rule)
        tang = np.swapaxes(ref[:, 1:] - ref[:, :1], 1, 2)  # (s, n, n-1)
        img = jac @ tang[:, None]  # (s, q, n, n-1)
        gram = np.swapaxes(img, -1, -2) @ img
        # measure of the image of the reference facet, sampled at each node
        w = rule.weights[None, :] * np.sqrt(np.linalg.det(gram)) / math.factorial(n - 1)
        # the chart image already lies on the surface; snap away rounding
        pts = mesh.shape.project_to_boundary(x.reshape(-1, n))
        return QuadPoints(pts, w.ravel())
    p = mesh.vertices[f]
    x = np.einsum("qa,san->sqn", rule.bary, p).reshape(-1, n)
    meas = np.repeat(mesh.facet_measures(), len(rule.weights)) * np.tile(rule.weights, len(f))
    if mesh.shape is not None and hasattr(mesh.shape, "project_to_boundary"):
        x = mesh.shape.project_to_boundary(x)
    return QuadPoints(x, meas)


def volume_chunks(mesh: SimplicialMesh, order: int = 4, curved: bool = True,
                  max_points: int = 400_000):
    """Yield :func:`volume_quadrature` over consecutive blocks of cells."""
    per = len(simplex_rule(mesh.dim, order).weights)
    step = max(1, max_points // per)
    for start in range(0, mesh.n_cells, step):
        yield volume_quadrature(mesh, order, curved, slice(start, start + step))
