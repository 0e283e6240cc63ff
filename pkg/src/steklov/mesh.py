"""Conforming simplicial meshes of balls and ellipsoids, refinement and text I/O.

Generated meshes live in two coordinate systems: a reference triangulation
of the hexagon / icosahedron (uniform Freudenthal subdivision of the cones
over the polytope faces) and its image under the shape chart.  Keeping the
reference coordinates lets refinement and curved quadrature use the exact
geometry while assembly works on the affine cells.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    MeshIndexError,
    MeshingError,
    MeshParseError,
    MeshValidationError,
    ResourceError,
)
from .shapes import ShapeSpec, _Quadric, reference_polytope

MAX_CELLS = 20_000_000

# realized max cell diameter times subdivision count, per unit semi-axis
_H_CONSTANT = {2: 1.16, 3: 2.0}


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    facet_cells: np.ndarray
    shape: Optional[ShapeSpec] = None
    ref_vertices: Optional[np.ndarray] = None
    subdivisions: Optional[int] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("vertices", "cells", "boundary_facets", "facet_cells", "ref_vertices"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        """Largest cell diameter."""
        if "h" not in self._cache:
            x = self.vertices[self.cells]
            d = 0.0
            for i, j in itertools.combinations(range(self.dim + 1), 2):
                d = max(d, float(np.linalg.norm(x[:, i] - x[:, j], axis=1).max()))
            self._cache["h"] = d
        return self._cache["h"]

    @property
    def boundary_vertices(self) -> np.ndarray:
        if "bverts" not in self._cache:
            b = np.unique(self.boundary_facets)
            b.setflags(write=False)
            self._cache["bverts"] = b
        return self._cache["bverts"]

    @property
    def interior_vertices(self) -> np.ndarray:
        if "iverts" not in self._cache:
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[self.boundary_vertices] = False
            i = np.flatnonzero(mask)
            i.setflags(write=False)
            self._cache["iverts"] = i
        return self._cache["iverts"]

    def cell_volumes(self) -> np.ndarray:
        """Signed cell volumes (positive for a consistently oriented mesh)."""
        x = self.vertices[self.cells]
        return np.linalg.det(x[:, 1:] - x[:, :1]) / math.factorial(self.dim)

    def facet_normals(self) -> np.ndarray:
        """Outward unit normals of the (flat) boundary facets."""
        return _facet_normals(self.vertices, self.boundary_facets)

    def facet_measures(self) -> np.ndarray:
        x = self.vertices[self.boundary_facets]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    def volume(self) -> float:
        return float(self.cell_volumes().sum())

    def boundary_measure(self) -> float:
        return float(self.facet_measures().sum())

    def check(self, tol: float = 1e-10) -> None:
        """Raise :class:`MeshValidationError` if any mesh invariant fails."""
        vol = self.cell_volumes()
        if np.any(vol <= 0):
            i = int(np.argmin(vol))
            raise MeshValidationError(f"cell {i} has non-positive volume {vol[i]:.3e}")
        _check_closed(self.boundary_facets, self.dim)
        centroids = self.vertices[self.cells].mean(axis=1)
        fc = self.vertices[self.boundary_facets].mean(axis=1)
        out = np.sum(self.facet_normals() * (fc - centroids[self.facet_cells]), axis=1)
        if np.any(out <= 0):
            raise MeshValidationError(f"boundary facet {int(np.argmin(out))} is not outward oriented")
        if isinstance(self.shape, _Quadric):
            lvl = np.abs(self.shape.level(self.vertices[self.boundary_vertices]))
            if lvl.max() > tol:
                raise MeshValidationError(f"boundary vertex off the surface by {lvl.max():.3e}")


class ScalarField(np.lib.mixins.NDArrayOperatorsMixin):
    """One value per mesh vertex."""

    def __init__(self, mesh: SimplicialMesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(f"expected {mesh.n_vertices} values, got shape {values.shape}")
        self.mesh = mesh
        self.values = values

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, idx):
        return self.values[idx]

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        args = [x.values if isinstance(x, ScalarField) else x for x in inputs]
        return getattr(ufunc, method)(*args, **kwargs)

    @property
    def boundary(self) -> np.ndarray:
        return self.values[self.mesh.boundary_vertices]

    def __repr__(self):
        return f"ScalarField(n={len(self.values)})"


# --- topology helpers -------------------------------------------------------------


def _facet_normals(x: np.ndarray, facets: np.ndarray) -> np.ndarray:
    p = x[facets]
    if x.shape[1] == 2:
        e = p[:, 1] - p[:, 0]
        nv = np.column_stack([e[:, 1], -e[:, 0]])
    else:
        nv = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return nv / np.linalg.norm(nv, axis=1, keepdims=True)


def _orient_cells(x: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = x[cells]
    det = np.linalg.det(p[:, 1:] - p[:, :1])
    cells = cells.copy()
    neg = det < 0
    cells[neg, -2], cells[neg, -1] = cells[neg, -1], cells[neg, -2].copy()
    return cells


def _boundary_from_cells(x: np.ndarray, cells: np.ndarray):
    """Facets owned by exactly one cell, oriented outward, and their owning cells."""
    n = cells.shape[1] - 1
    local = [tuple(j for j in range(n + 1) if j != i) for i in range(n + 1)]
    facets = np.concatenate([cells[:, list(f)] for f in local])
    owner = np.tile(np.arange(len(cells)), n + 1)
    opposite = np.concatenate([cells[:, i] for i in range(n + 1)])
    key = np.sort(facets, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    single = counts[inv] == 1
    facets, owner, opposite = facets[single], owner[single], opposite[single]
    # order rows deterministically
    order = np.lexsort(np.sort(facets, axis=1).T[::-1])
    facets, owner, opposite = facets[order], owner[order], opposite[order]
    nv = _facet_normals(x, facets)
    inward = np.sum(nv * (x[opposite] - x[facets[:, 0]]), axis=1) > 0
    facets = facets.copy()
    facets[inward, 0], facets[inward, 1] = facets[inward, 1], facets[inward, 0].copy()
    return facets, owner


def _check_closed(facets: np.ndarray, n: int) -> None:
    """Every (n-2)-face of the boundary complex must be shared by exactly two facets."""
    if len(facets) == 0:
        raise MeshValidationError("boundary not closed: no boundary facets")
    if n == 2:
        starts = np.bincount(facets[:, 0], minlength=facets.max() + 1)
        ends = np.bincount(facets[:, 1], minlength=facets.max() + 1)
        if np.any(starts != ends):
            raise MeshValidationError("boundary not closed")
        touched = np.unique(facets)
        if np.any(starts[touched] != 1):
            raise MeshValidationError("boundary not closed")
        return
    edges = np.concatenate([facets[:, [0, 1]], facets[:, [1, 2]], facets[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    _, counts = np.unique(key, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshValidationError("boundary not closed")
    # consistent orientation: each directed edge appears once
    _, dcounts = np.unique(edges, axis=0, return_counts=True)
    if np.any(dcounts != 1):
        raise MeshValidationError("boundary not consistently oriented")


# --- generation -------------------------------------------------------------------


def _kuhn_simplices(k: int, d: int) -> np.ndarray:
    """Lattice simplices of the Freudenthal subdivision of ``k >= y1 >= ... >= yd >= 0``.

    Returns integer coordinates of shape ``(k**d, d+1, d)``.
    """
    grid = np.stack(np.meshgrid(*([np.arange(k)] * d), indexing="ij"), -1).reshape(-1, d)
    out = []
    for perm in itertools.permutations(range(d)):
        verts = [grid]
        cur = grid.copy()
        for axis in perm:
            cur = cur.copy()
            cur[:, axis] += 1
            verts.append(cur)
        s = np.stack(verts, axis=1)
        ok = np.ones(len(grid), dtype=bool)
        for v in range(d + 1):
            y = s[:, v]
            ok &= (y[:, 0] <= k) & (y[:, -1] >= 0)
            for i in range(d - 1):
                ok &= y[:, i] >= y[:, i + 1]
        out.append(s[ok])
    res = np.concatenate(out)
    assert len(res) == k**d
    return res


def _reference_mesh(n: int, k: int):
    """Subdivide every cone (origin, polytope face) into ``k**n`` simplices."""
    poly = reference_polytope(n)
    coarse_pts = np.vstack([np.zeros(n), poly.vertices])
    coarse = np.sort(np.column_stack([np.zeros(len(poly.simplices), int), poly.simplices + 1]), axis=1)
    lat = _kuhn_simplices(k, n)  # (m, n+1, n)
    m = len(lat)
    # barycentric integer weights w_j = y_j - y_{j+1}, y_0 = k, y_{n+1} = 0
    y = np.concatenate([np.full((m, n + 1, 1), k), lat, np.zeros((m, n + 1, 1), int)], axis=2)
    w = y[:, :, :-1] - y[:, :, 1:]  # (m, n+1 local verts, n+1 coarse verts)
    nc = len(coarse_pts)
    keys = np.zeros((len(coarse), m, n + 1, nc), dtype=np.int32)
    for s, cv in enumerate(coarse):
        keys[s][:, :, cv] = w
    flat = keys.reshape(-1, nc)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    cells = inv.reshape(-1, n + 1)
    xi = (uniq @ coarse_pts) / k
    return xi, cells


def generate(shape: ShapeSpec, target_h: Optional[float] = None,
             subdivisions: Optional[int] = None) -> SimplicialMesh:
    """Mesh a ball or ellipsoid.

    Either ``target_h`` (realized size stays below ``1.5 * target_h``) or an
    explicit ``subdivisions`` count ``k`` (``6 k**2`` triangles in 2D,
    ``20 k**3`` tetrahedra in 3D) must be given.
    """
    if not isinstance(shape, _Quadric):
        raise MeshingError(f"cannot mesh {type(shape).__name__}")
    n = shape.dim
    amax = float(shape.axes_array.max())
    if subdivisions is None:
        if target_h is None:
            raise ValueError("give target_h or subdivisions")
        if not 0 < target_h <= shape.diameter / 4:
            raise ValueError("target_h must be positive and at most a quarter of the diameter")
        k = max(2, int(round(_H_CONSTANT[n] * amax / target_h)))
    else:
        k = int(subdivisions)
        if k < 1:
            raise ValueError("subdivisions must be positive")
    base = 6 if n == 2 else 20
    while True:
        if base * k**n > MAX_CELLS:
            raise ResourceError(f"{base * k**n} cells exceed the limit of {MAX_CELLS}")
        mesh = _mesh_from_reference(shape, *_reference_mesh(n, k), k)
        if target_h is None or subdivisions is not None or mesh.h <= 1.5 * target_h:
            return mesh
        k += 1


def _mesh_from_reference(shape, xi: np.ndarray, cells: np.ndarray, k: int) -> SimplicialMesh:
    x = shape.chart(xi)
    cells = _orient_cells(xi, cells)
    facets, owner = _boundary_from_cells(xi, cells)
    bv = np.unique(facets)
    x[bv] = shape.project_to_boundary(x[bv])
    vol = np.linalg.det(x[cells][:, 1:] - x[cells][:, :1])
    if np.any(vol <= 0):
        i = int(np.argmin(vol))
        raise MeshingError(f"cell {i} degenerated after projection", cell=i)
    return SimplicialMesh(x, cells, facets, owner, shape=shape, ref_vertices=xi, subdivisions=k)


# --- red refinement ---------------------------------------------------------------


def _red_children(cells: np.ndarray, mid: dict) -> np.ndarray:
    """Children of red refinement; ``mid[(i, j)]`` holds the midpoint ids of local edge (i, j)."""
    n = cells.shape[1] - 1
    v = [cells[:, i] for i in range(n + 1)]
    m = mid
    if n == 2:
        kids = [
            (v[0], m[0, 1], m[0, 2]),
            (m[0, 1], v[1], m[1, 2]),
            (m[0, 2], m[1, 2], v[2]),
            (m[0, 1], m[1, 2], m[0, 2]),
        ]
    else:
        # Bey's refinement: the inner octahedron is cut along the (0,2)-(1,3) diagonal
        kids = [
            (v[0], m[0, 1], m[0, 2], m[0, 3]),
            (m[0, 1], v[1], m[1, 2], m[1, 3]),
            (m[0, 2], m[1, 2], v[2], m[2, 3]),
            (m[0, 3], m[1, 3], m[2, 3], v[3]),
            (m[0, 1], m[0, 2], m[0, 3], m[1, 3]),
            (m[0, 1], m[0, 2], m[1, 2], m[1, 3]),
            (m[0, 2], m[0, 3], m[1, 3], m[2, 3]),
            (m[0, 2], m[1, 2], m[1, 3], m[2, 3]),
        ]
    return np.stack([np.column_stack(c) for c in kids], axis=1).reshape(-1, n + 1)


def _shortest_diagonal_first(x: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Relabel tetrahedra so the (0,2)-(1,3) octahedron diagonal is the shortest one."""
    p = x[cells]

    def diag(a, b, c, d):
        return np.linalg.norm((p[:, a] + p[:, b]) - (p[:, c] + p[:, d]), axis=1)

    lengths = np.column_stack([diag(0, 2, 1, 3), diag(0, 3, 1, 2), diag(0, 1, 2, 3)])
    choice = np.argmin(lengths, axis=1)
    perms = np.array([[0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3]])
    return np.take_along_axis(cells, perms[choice], axis=1)


def refine(mesh: SimplicialMesh) -> SimplicialMesh:
    """Uniform red refinement; every cell is split into ``2**n`` children.

    New boundary vertices land on the exact surface (through the chart for
    generated meshes, by radial projection otherwise).
    """
    n = mesh.dim
    nv = mesh.n_vertices
    cells = mesh.cells
    if len(cells) * 2**n > MAX_CELLS:
        raise ResourceError("refined mesh exceeds the cell limit")
    base = mesh.ref_vertices if mesh.ref_vertices is not None else mesh.vertices
    if n == 3:
        cells = _shortest_diagonal_first(base, cells)
    local = list(itertools.combinations(range(n + 1), 2))
    pairs = np.sort(np.concatenate([cells[:, [i, j]] for i, j in local]), axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.ravel().reshape(len(local), len(cells))
    mid = {pair: nv + inv[e] for e, pair in enumerate(local)}
    children = _red_children(cells, mid)
    new_base = np.vstack([base, 0.5 * (base[edges[:, 0]] + base[edges[:, 1]])])
    children = _orient_cells(new_base, children)
    facets, owner = _boundary_from_cells(new_base, children)
    bv = np.unique(facets)
    if mesh.ref_vertices is not None and mesh.shape is not None:
        ref = new_base
        x = mesh.shape.chart(ref)
        x[bv] = mesh.shape.project_to_boundary(x[bv])
    else:
        ref = None
        x = new_base.copy()
        if isinstance(mesh.shape, _Quadric):
            newb = bv[bv >= nv]
            x[newb] = mesh.shape.project_to_boundary(x[newb])
    k = 2 * mesh.subdivisions if mesh.subdivisions else None
    return SimplicialMesh(x, children, facets, owner, shape=mesh.shape, ref_vertices=ref, subdivisions=k)


# --- text format ------------------------------------------------------------------


def export_mesh(mesh: SimplicialMesh, values=None) -> str:
    """Serialize to the plain-text format; optional per-vertex values are appended."""
    out = io.StringIO()
    n = mesh.dim
    out.write(f"{n} {mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_facets)}\n")
    for row in mesh.vertices:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")
    for row in mesh.cells:
        out.write(" ".join(str(int(v)) for v in row) + "\n")
    for row in mesh.boundary_facets:
        out.write(" ".join(str(int(v)) for v in row) + "\n")
    if values is not None:
        vals = np.asarray(values, dtype=float)
        if vals.shape != (mesh.n_vertices,):
            raise ValueError("need exactly one value per vertex")
        out.write("# values\n")
        for v in vals:
            out.write(repr(float(v)) + "\n")
    return out.getvalue()


def export_field(mesh: SimplicialMesh, values) -> str:
    return export_mesh(mesh, values)


def import_mesh(text: str, shape: Optional[ShapeSpec] = None, with_values: bool = False):
    """Parse the plain-text format and validate the mesh invariants.

    Returns the mesh, or ``(mesh, values)`` when ``with_values`` is set.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MeshParseError("empty mesh file")
    header = lines[0].split()
    try:
        n, nv, nc, nf = (int(t) for t in header)
    except ValueError:
        raise MeshParseError(f"malformed header {lines[0]!r}") from None
    if len(header) != 4 or n not in (2, 3) or min(nv, nc, nf) < 0:
        raise MeshParseError(f"malformed header {lines[0]!r}")
    need = 1 + nv + nc + nf
    if len(lines) < need:
        raise MeshParseError(f"expected {need} data lines, found {len(lines)}")

    def block(start, count, width, conv):
        rows = []
        for ln in lines[start:start + count]:
            toks = ln.split()
            if len(toks) != width:
                raise MeshParseError(f"expected {width} entries in line {ln!r}")
            try:
                rows.append([conv(t) for t in toks])
            except ValueError:
                raise MeshParseError(f"bad number in line {ln!r}") from None
        return rows

    x = np.array(block(1, nv, n, float), dtype=float).reshape(nv, n)
    cells = np.array(block(1 + nv, nc, n + 1, int), dtype=np.int64).reshape(nc, n + 1)
    facets = np.array(block(1 + nv + nc, nf, n, int), dtype=np.int64).reshape(nf, n)
    for name, arr in (("cell", cells), ("facet", facets)):
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise MeshIndexError(f"{name} vertex index out of range")
    values = None
    rest = lines[need:]
    if with_values:
        if len(rest) != nv:
            raise MeshParseError("expected one value per vertex after the mesh")
        values = np.array([float(t) for t in rest])
    _check_closed(facets, n)
    computed, owner = _boundary_from_cells(x, cells)
    given = {tuple(sorted(f)) for f in facets.tolist()}
    if given != {tuple(sorted(f)) for f in computed.tolist()}:
        raise MeshValidationError("boundary facets do not match the free faces of the cells")
    # keep the file's facet order, attach owners
    index = {tuple(sorted(f)): i for i, f in enumerate(computed.tolist())}
    order = np.array([index[tuple(sorted(f))] for f in facets.tolist()], dtype=np.int64)
    mesh = SimplicialMesh(x, cells, facets, owner[order], shape=shape)
    mesh.check()
    return (mesh, values) if with_values else mesh
