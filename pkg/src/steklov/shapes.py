"""Analytic convex domains: balls, ellipsoids and 2D rotationally symmetric metrics.

Balls and ellipsoids carry their exact boundary geometry (normals, second
fundamental form, principal curvatures), the Euclidean distance to the
boundary and a smooth chart from a reference polytope onto the domain that
the mesh generator and the curved quadrature share.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull

from .errors import DomainError, NumericalError, UnsupportedShapeError

_OUTSIDE_TOL = 1e-10


class _Quadric:
    """Shared geometry of ``{x : sum(((x - center) / axes)**2) <= 1}``."""

    @property
    def axes_array(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        return len(self.axes_array)

    @property
    def center_array(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.dim)
        return np.asarray(self.center, dtype=float)

    @property
    def diameter(self) -> float:
        return 2.0 * float(self.axes_array.max())

    def level(self, x) -> np.ndarray:
        """``sum(((x - center)/axes)**2) - 1``: negative inside, zero on the boundary."""
        z = (np.asarray(x, dtype=float) - self.center_array) / self.axes_array
        return np.sum(z * z, axis=-1) - 1.0

    def contains(self, x, tol: float = _OUTSIDE_TOL) -> np.ndarray:
        return self.level(x) <= tol

    def normal(self, y) -> np.ndarray:
        """Outward unit normal of the level set through ``y``."""
        g = (np.asarray(y, dtype=float) - self.center_array) / self.axes_array**2
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def _grad_norm(self, y) -> np.ndarray:
        g = 2.0 * (np.asarray(y, dtype=float) - self.center_array) / self.axes_array**2
        return np.linalg.norm(g, axis=-1)

    def shape_operator(self, y) -> np.ndarray:
        """Weingarten map ``P Hess(F) P / |grad F|`` at boundary points, shape (..., n, n)."""
        y = np.asarray(y, dtype=float)
        nu = self.normal(y)
        hess = np.diag(2.0 / self.axes_array**2)
        proj = np.eye(self.dim) - nu[..., :, None] * nu[..., None, :]
        w = proj @ hess @ proj
        return w / self._grad_norm(y)[..., None, None]

    def second_fundamental_form(self, y, u, v) -> np.ndarray:
        """``h(u, v) = <D_u nu, v>`` for tangent vectors ``u``, ``v`` at ``y``."""
        hess_diag = 2.0 / self.axes_array**2
        return np.sum(np.asarray(u) * hess_diag * np.asarray(v), axis=-1) / self._grad_norm(y)

    def mean_curvature(self, y) -> np.ndarray:
        """Trace of the second fundamental form (sum of principal curvatures)."""
        nu = self.normal(y)
        hess_diag = 2.0 / self.axes_array**2
        tr = hess_diag.sum() - np.sum(nu * nu * hess_diag, axis=-1)
        return tr / self._grad_norm(y)

    def principal_curvatures(self, y) -> np.ndarray:
        """Ascending principal curvatures at boundary points, shape (..., n-1)."""
        w = self.shape_operator(y)
        ev = np.linalg.eigvalsh(w)
        # the normal direction contributes the (exact) zero eigenvalue
        nu = self.normal(y)
        wnu = np.einsum("...ij,...j->...i", w, nu)
        assert np.all(np.linalg.norm(wnu, axis=-1) < 1e-8 * (1 + np.abs(ev).max()))
        idx = np.argmin(np.abs(ev), axis=-1)
        keep = np.ones(ev.shape, dtype=bool)
        np.put_along_axis(keep, idx[..., None], False, axis=-1)
        return ev[keep].reshape(ev.shape[:-1] + (self.dim - 1,))

    def project_to_boundary(self, x) -> np.ndarray:
        """Radial (chart-compatible) projection onto the boundary; used for mesh refinement."""
        z = (np.asarray(x, dtype=float) - self.center_array) / self.axes_array
        z = z / np.linalg.norm(z, axis=-1, keepdims=True)
        return self.center_array + z * self.axes_array

    # --- chart from the reference polytope ------------------------------------

    def chart(self, xi) -> np.ndarray:
        """Map reference-polytope points onto the domain (boundary onto boundary)."""
        phi, _ = _ball_map(np.asarray(xi, dtype=float), self.dim, jacobian=False)
        return self.center_array + phi * self.axes_array

    def chart_jacobian(self, xi):
        """Return ``(x, dx/dxi)`` for reference points ``xi``."""
        phi, jac = _ball_map(np.asarray(xi, dtype=float), self.dim, jacobian=True)
        x = self.center_array + phi * self.axes_array
        return x, jac * self.axes_array[:, None]


@dataclass(frozen=True)
class Ball(_Quadric):
    radius: float
    n: int = 2
    center: Optional[tuple] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be strictly positive")
        if self.n not in (2, 3):
            raise ValueError("only dimensions 2 and 3 are supported")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))
            if len(self.center) != self.n:
                raise ValueError("center has the wrong dimension")

    @property
    def axes_array(self) -> np.ndarray:
        return np.full(self.n, float(self.radius))


@dataclass(frozen=True)
class Ellipsoid(_Quadric):
    """Axis-aligned ellipsoid (an ellipse when two semi-axes are given)."""

    axes: tuple
    center: Optional[tuple] = None

    def __post_init__(self):
        axes = tuple(float(a) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        if len(axes) not in (2, 3):
            raise ValueError("only dimensions 2 and 3 are supported")
        if min(axes) <= 0:
            raise ValueError("semi-axes must be strictly positive")
        if any(a < b for a, b in zip(axes, axes[1:])):
            raise ValueError("semi-axes must be sorted in descending order")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))
            if len(self.center) != len(axes):
                raise ValueError("center has the wrong dimension")

    @property
    def axes_array(self) -> np.ndarray:
        return np.asarray(self.axes, dtype=float)


@dataclass(frozen=True)
class RotSymProfile:
    """Metric ``dr^2 + f(r)^2 dtheta^2`` on a 2D disk of radius ``R``.

    The warping function is given by samples and interpolated with a cubic
    spline; ``f(0) = 0`` and ``f'(0) = 1`` are required for smoothness at
    the pole.
    """

    radii: tuple
    values: tuple
    name: str = "profile"
    spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        f = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "radii", tuple(r.tolist()))
        object.__setattr__(self, "values", tuple(f.tolist()))
        if r.ndim != 1 or r.shape != f.shape or len(r) < 4:
            raise ValueError("profile needs at least 4 matching (r, f) samples")
        if np.any(np.diff(r) <= 0) or r[0] != 0.0:
            raise ValueError("profile radii must start at 0 and increase strictly")
        if abs(f[0]) > 1e-12:
            raise ValueError("profile must satisfy f(0) = 0")
        if np.any(f[1:] <= 0):
            raise ValueError("profile f must be strictly positive on (0, R]")
        spline = CubicSpline(r, f)
        if abs(spline(0.0, 1) - 1.0) > 1e-6:
            raise ValueError("profile must satisfy f'(0) = 1")
        object.__setattr__(self, "spline", spline)

    @property
    def dim(self) -> int:
        return 2

    @property
    def R(self) -> float:
        return self.radii[-1]

    @classmethod
    def flat(cls, R: float = 1.0, samples: int = 65) -> "RotSymProfile":
        r = np.linspace(0.0, R, samples)
        return cls(tuple(r), tuple(r), name="flat")

    @classmethod
    def spherical_cap(cls, R: float, samples: int = 401) -> "RotSymProfile":
        """Geodesic disk of radius ``R < pi/2`` on the unit sphere."""
        if not 0 < R < math.pi / 2:
            raise ValueError("spherical cap radius must lie in (0, pi/2)")
        r = np.linspace(0.0, R, samples)
        return cls(tuple(r), tuple(np.sin(r)), name="spherical_cap")


ShapeSpec = Union[Ball, Ellipsoid, RotSymProfile]


# --- curvature -------------------------------------------------------------------


def min_principal_curvature(shape: ShapeSpec) -> float:
    """Infimum over the boundary of the smallest principal curvature."""
    if isinstance(shape, Ball):
        return 1.0 / shape.radius
    if isinstance(shape, Ellipsoid):
        # attained at the ends of the shortest axis, bending along the longest
        a = shape.axes_array
        return float(a[-1] / a[0] ** 2)
    raise UnsupportedShapeError(f"no exact curvature bound for {type(shape).__name__}")


def weight_V(rho, c):
    """The weight ``rho - (c/2) rho**2``."""
    return rho - 0.5 * c * rho * rho


# --- projection onto the boundary -------------------------------------------------


class Projection(NamedTuple):
    rho: np.ndarray
    foot: np.ndarray
    normal: np.ndarray
    degenerate: np.ndarray


def signed_projection(shape: ShapeSpec, point) -> Projection:
    """Distance to the boundary, nearest boundary point and outward normal there.

    Accepts a single point or an array of points of shape ``(m, n)``.  Points
    whose nearest boundary point is not unique in an obvious way (the center
    of a ball, points on the medial plane of an ellipsoid whose foot lies on
    the shortest axis) get ``degenerate = True`` and an arbitrary valid foot.
    """
    if not isinstance(shape, _Quadric):
        raise UnsupportedShapeError(f"cannot project onto {type(shape).__name__}")
    p = np.asarray(point, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != shape.dim:
        raise ValueError(f"expected points of dimension {shape.dim}")
    lvl = shape.level(p)
    bad = lvl > _OUTSIDE_TOL
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"point {p[i].tolist()} lies outside the domain (level {lvl[i]:.3e})")
    if isinstance(shape, Ball):
        out = _project_ball(shape, p)
    else:
        out = _project_ellipsoid(shape, p)
    if single:
        return Projection(float(out.rho[0]), out.foot[0], out.normal[0], bool(out.degenerate[0]))
    return out


def _project_ball(shape: Ball, p: np.ndarray) -> Projection:
    d = p - shape.center_array
    r = np.linalg.norm(d, axis=1)
    R = shape.radius
    degenerate = r <= 1e-14 * R
    u = np.zeros_like(d)
    u[~degenerate] = d[~degenerate] / r[~degenerate, None]
    u[degenerate, 0] = 1.0
    rho = np.maximum(R - r, 0.0)
    return Projection(rho, shape.center_array + R * u, u, degenerate)


def _project_ellipsoid(shape: Ellipsoid, p: np.ndarray, max_iter: int = 200) -> Projection:
    a = shape.axes_array
    c = shape.center_array
    d = p - c
    sgn = np.where(d < 0, -1.0, 1.0)
    z = np.abs(d)
    m = len(z)
    a2 = a * a
    amin = a[-1]
    small = np.isclose(a, amin, rtol=1e-14, atol=0.0)
    zs = np.linalg.norm(z[:, small], axis=1)
    scale = amin * amin

    def G(t):
        q = a * z / (a2 + t[:, None])
        return np.sum(q * q, axis=1) - 1.0

    t = np.zeros(m)
    degenerate = np.zeros(m, dtype=bool)
    pole = zs <= 1e-15 * amin
    lo = -scale + amin * zs
    y_pole = None
    if np.any(pole):
        # shortest-axis coordinates vanish: the root may sit at the pole itself
        zp = z[pole]
        big = ~small
        q = np.zeros_like(zp)
        q[:, big] = a[big] * zp[:, big] / (a2[big] - scale)
        g0 = np.sum(q * q, axis=1) - 1.0
        at_pole = g0 <= 0.0
        idx = np.flatnonzero(pole)
        lo[idx] = -scale
        if np.any(at_pole):
            yp = np.zeros((int(at_pole.sum()), len(a)))
            yp[:, big] = a2[big] * zp[at_pole][:, big] / (a2[big] - scale)
            first_small = int(np.flatnonzero(small)[0])
            yp[:, first_small] = amin * np.sqrt(np.maximum(-g0[at_pole], 0.0))
            y_pole = (idx[at_pole], yp)
            degenerate[idx[at_pole]] = True
    hi = np.zeros(m)
    active = np.ones(m, dtype=bool)
    if y_pole is not None:
        active[y_pole[0]] = False
    t = np.where(active, 0.5 * (lo + hi), 0.0)
    t[active & ~pole] = lo[active & ~pole]

    # Newton on 1/sqrt(G+1) - 1, which is close to linear near the pole;
    # the bracket [lo, hi] keeps every iterate admissible.
    it = 0
    for it in range(max_iter):
        if not np.any(active):
            break
        ta = t[active]
        za = z[active]
        den = a2 + ta[:, None]
        q = a * za / den
        g = np.sum(q * q, axis=1)
        dg = -2.0 * np.sum(q * q / den, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = 1.0 / np.sqrt(g)
            phi = s - 1.0
            dphi = -0.5 * s**3 * dg
            step = -phi / dphi
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(phi <= 0, np.maximum(lo_a, ta), lo_a)
        hi_a = np.where(phi >= 0, np.minimum(hi_a, ta), hi_a)
        tn = ta + step
        outside = ~np.isfinite(tn) | (tn <= lo_a) | (tn >= hi_a)
        tn = np.where(outside, 0.5 * (lo_a + hi_a), tn)
        tn = np.where(phi == 0, ta, tn)
        lo[active], hi[active] = lo_a, hi_a
        done = (np.abs(tn - ta) <= 4e-16 * scale) | (hi_a - lo_a <= 4e-16 * scale)
        t[active] = tn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if np.any(active):
        raise NumericalError(
            "ellipsoid projection did not converge",
            {"iterations": it + 1, "unconverged": int(active.sum()),
             "first_point": p[np.flatnonzero(active)[0]].tolist()},
        )
    y = a2 * z / (a2 + t[:, None])
    if y_pole is not None:
        y[y_pole[0]] = y_pole[1]
    rho = np.linalg.norm(z - y, axis=1)
    foot = c + sgn * y
    return Projection(rho, foot, shape.normal(foot), degenerate)


def cut_locus_gap(shape: ShapeSpec, points, proj: Optional[Projection] = None,
                  separation: float = 0.0) -> np.ndarray:
    """Smallest excess distance of a competing foot point.

    Competing feet are mirror images of the nearest boundary point.  For a
    ball the only candidate is the antipode.  For an ellipsoid the cut locus
    lies in the hyperplanes of the shortest axes, so the candidates are the
    reflections that flip shortest-axis coordinates.  A gap near zero with
    feet more than ``separation`` apart means the point lies close to the
    cut locus.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if proj is None:
        proj = signed_projection(shape, p)
    c = shape.center_array
    rel = proj.foot - c
    gap = np.full(len(p), np.inf)
    n = shape.dim
    a = shape.axes_array
    small = np.isclose(a, a[-1], rtol=1e-14, atol=0.0)
    if isinstance(shape, Ball) or small.all():
        flips = [-np.ones(n)]
    else:
        idx = np.flatnonzero(small)
        flips = []
        for mask in range(1, 2 ** len(idx)):
            f = np.ones(n)
            f[idx[[(mask >> i) & 1 == 1 for i in range(len(idx))]]] = -1.0
            flips.append(f)
    for flip in flips:
        alt = c + rel * flip
        far = np.linalg.norm(alt - proj.foot, axis=1) > separation
        excess = np.linalg.norm(p - alt, axis=1) - proj.rho
        gap = np.where(far, np.minimum(gap, excess), gap)
    gap[proj.degenerate] = 0.0
    return gap


# --- distance field on a mesh -----------------------------------------------------


@dataclass(frozen=True)
class DistanceField:
    mesh: object
    rho: np.ndarray
    near_cut: np.ndarray
    band: float

    @property
    def rho_max(self) -> float:
        return float(self.rho.max())

    def weight(self, c: float) -> np.ndarray:
        return weight_V(self.rho, c)


def distance_field(shape: ShapeSpec, mesh, band: Optional[float] = None) -> DistanceField:
    """Exact distance to the boundary at every mesh vertex.

    Vertices whose competing foot point (more than ``10 h`` away) is within
    ``band`` (default ``5 h``) of being equally near are flagged ``near_cut``.
    """
    h = mesh.h
    band = 5.0 * h if band is None else float(band)
    x = mesh.vertices
    inside = x.copy()
    bidx = mesh.boundary_vertices
    proj = signed_projection(shape, inside)
    rho = np.array(proj.rho, dtype=float)
    rho[bidx] = 0.0
    gap = cut_locus_gap(shape, inside, proj, separation=10.0 * h)
    near = gap <= band
    near[bidx] = False
    rho.setflags(write=False)
    near.setflags(write=False)
    return DistanceField(mesh, rho, near, band)


# --- reference polytope and its map onto the unit ball -----------------------------


class Polytope(NamedTuple):
    vertices: np.ndarray  # (v, n), on the unit sphere
    simplices: np.ndarray  # (s, n) boundary faces, each coned to the origin
    normals: np.ndarray  # (s, n) outward unit face normals
    offsets: np.ndarray  # (s,) distance of each face plane from the origin


def _polytope(n: int) -> Polytope:
    if n == 2:
        ang = np.arange(6) * (np.pi / 3)
        v = np.column_stack([np.cos(ang), np.sin(ang)])
        faces = np.array([[i, (i + 1) % 6] for i in range(6)])
    elif n == 3:
        phi = (1 + 5**0.5) / 2
        v = []
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                v += [(0, s1, s2 * phi), (s1, s2 * phi, 0), (s2 * phi, 0, s1)]
        v = np.array(v, dtype=float)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        faces = ConvexHull(v).simplices
    else:
        raise ValueError("only dimensions 2 and 3 are supported")
    normals = []
    offsets = []
    for f in faces:
        p = v[f]
        if n == 2:
            e = p[1] - p[0]
            nv = np.array([e[1], -e[0]])
        else:
            nv = np.cross(p[1] - p[0], p[2] - p[0])
        nv /= np.linalg.norm(nv)
        if nv @ p.mean(axis=0) < 0:
            nv = -nv
        normals.append(nv)
        offsets.append(nv @ p[0])
    return Polytope(v, np.asarray(faces), np.array(normals), np.array(offsets))


_POLYTOPES: dict = {}


def reference_polytope(n: int) -> Polytope:
    """Hexagon (n=2) or icosahedron (n=3) inscribed in the unit sphere."""
    if n not in _POLYTOPES:
        _POLYTOPES[n] = _polytope(n)
    return _POLYTOPES[n]


def _smoothstep(t):
    """C-infinity transition from 0 (t <= 0) to 1 (t >= 1) and its derivative."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        s = a / (a + b)
        da = np.where(t > 0, a / np.where(t > 0, t * t, 1.0), 0.0)
        db = np.where(t < 1, -b / np.where(t < 1, (1.0 - t) ** 2, 1.0), 0.0)
        ds = (da * b - a * db) / (a + b) ** 2
    return s, ds


def _ball_map(xi: np.ndarray, n: int, jacobian: bool):
    """Radial stretch of the reference polytope onto the unit ball.

    ``x -> x * (1 - beta + beta * g(x)/|x|)`` where ``g`` is the polytope gauge
    and ``beta(|x|)`` blends smoothly from the identity near the origin to the
    gauge normalization near the surface.  The map is smooth inside every
    cone over a polytope face, so meshes subordinate to those cones see a
    smooth map on every cell.
    """
    poly = reference_polytope(n)
    r_in = float(poly.offsets.min())
    r_a, r_b = 0.25 * r_in, 0.75 * r_in
    shape = xi.shape
    x = xi.reshape(-1, n)
    r = np.linalg.norm(x, axis=1)
    vals = (x @ poly.normals.T) / poly.offsets
    face = np.argmax(vals, axis=1)
    g = vals[np.arange(len(x)), face]
    beta, dbeta = _smoothstep((r - r_a) / (r_b - r_a))
    dbeta = dbeta / (r_b - r_a)
    safe_r = np.where(r > 0, r, 1.0)
    ratio = np.where(r > 0, g / safe_r, 1.0)
    s = 1.0 + beta * (ratio - 1.0)
    phi = x * s[:, None]
    if not jacobian:
        return phi.reshape(shape), None
    nf = poly.normals[face] / poly.offsets[face][:, None]
    xhat = x / safe_r[:, None]
    grad_ratio = (nf - (g / safe_r)[:, None] * xhat) / safe_r[:, None]
    grad_s = (dbeta * (ratio - 1.0))[:, None] * xhat + beta[:, None] * grad_ratio
    grad_s[r == 0] = 0.0
    jac = s[:, None, None] * np.eye(n) + x[:, :, None] * grad_s[:, None, :]
    return phi.reshape(shape), jac.reshape(shape + (n,))


def parse_shape(desc) -> ShapeSpec:
    """Build a shape from a config object or a compact string.

    Accepted forms: ``{"type": "ball", "R": 1.0, "n": 2}``,
    ``{"type": "ellipsoid", "axes": [2, 1]}`` (``"ellipse"`` is an alias),
    ``"ball:R=1,n=3"``, ``"ellipse:2,1"`` and ``"ellipsoid:1.5,1.2,1"``.
    """
    if isinstance(desc, (Ball, Ellipsoid, RotSymProfile)):
        return desc
    if isinstance(desc, str):
        desc = desc.strip()
        if desc.startswith("{"):
            import json

            return parse_shape(json.loads(desc))
        kind, _, rest = desc.partition(":")
        obj: dict = {"type": kind.strip().lower()}
        nums = []
        for tok in filter(None, (t.strip() for t in rest.split(","))):
            if "=" in tok:
                k, v = tok.split("=", 1)
                obj[k.strip()] = float(v)
            else:
                nums.append(float(tok))
        if nums:
            obj["axes"] = nums
        desc = obj
    kind = str(desc.get("type", "")).lower()
    center = desc.get("center")
    if kind == "ball":
        R = desc.get("R", desc.get("radius", 1.0))
        if "axes" in desc and "R" not in desc and "radius" not in desc:
            R = desc["axes"][0]
        return Ball(float(R), int(desc.get("n", 2)), tuple(center) if center else None)
    if kind in ("ellipsoid", "ellipse"):
        axes = desc.get("axes")
        if axes is None:
            axes = [desc[k] for k in ("a", "b", "c") if k in desc]
        return Ellipsoid(tuple(axes), tuple(center) if center else None)
    raise UnsupportedShapeError(f"unknown shape type {kind!r}")


def shape_to_dict(shape: ShapeSpec) -> dict:
    if isinstance(shape, Ball):
        d = {"type": "ball", "R": shape.radius, "n": shape.n}
    elif isinstance(shape, Ellipsoid):
        d = {"type": "ellipsoid", "axes": list(shape.axes)}
    elif isinstance(shape, RotSymProfile):
        return {"type": "rotsym", "name": shape.name, "R": shape.R}
    else:
        raise UnsupportedShapeError(type(shape).__name__)
    if shape.center is not None:
        d["center"] = list(shape.center)
    return d


def shape_label(shape: ShapeSpec) -> str:
    if isinstance(shape, Ball):
        return f"ball(n={shape.n},R={shape.radius:g})"
    if isinstance(shape, Ellipsoid):
        return "ellipsoid(" + ",".join(f"{a:g}" for a in shape.axes) + ")"
    return f"rotsym({shape.name})"
