"""Closed-form spectra, bound formulas and an ODE shooting solver for rotationally symmetric disks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import HypothesisViolation, NumericalError
from .shapes import RotSymProfile

RADICAND_TOL = 1e-12


def _multiplicity(n: int, m: int) -> int:
    """Dimension of degree-``m`` harmonic polynomials in ``n`` variables."""
    if m == 0:
        return 1
    if n == 2:
        return 2
    if n == 3:
        return 2 * m + 1
    raise ValueError(f"unsupported dimension {n}")


def _check_ball(n: int, R: float, count: int) -> None:
    if n not in (2, 3):
        raise ValueError(f"unsupported dimension {n}; expected 2 or 3")
    if not R > 0:
        raise ValueError("radius must be positive")
    if count < 1:
        raise ValueError("count must be positive")


def _ladder(n: int, count: int, value) -> list:
    out = []
    m = 0
    while len(out) < count:
        out.extend([value(m)] * _multiplicity(n, m))
        m += 1
    return out[:count]


def ball_steklov(n: int, R: float, count: int) -> list:
    """The first ``count`` Steklov eigenvalues ``m/R`` of the ``n``-ball, with multiplicity."""
    _check_ball(n, R, count)
    return _ladder(n, count, lambda m: m / R)


def sphere_laplacian(n: int, R: float, count: int) -> list:
    """The first ``count`` eigenvalues ``m(m+n-2)/R**2`` of the boundary sphere."""
    _check_ball(n, R, count)
    return _ladder(n, count, lambda m: m * (m + n - 2) / R**2)


def rotsym_steklov(profile: RotSymProfile, l: int, R: Optional[float] = None,
                   rtol: float = 1e-12) -> float:
    """Steklov eigenvalue of angular mode ``l`` for the metric ``dr^2 + f(r)^2 dtheta^2``.

    Integrates ``(f u')' = (l^2/f) u`` outward from ``r0 = 1e-4 R`` with
    the regular series start ``u = r^l (1 - kappa l r^2 / 2)``, where
    ``f = r + kappa r^3 + ...``, and returns ``u'(R)/u(R)``.
    """
    if l < 1 or int(l) != l:
        raise ValueError("mode l must be a positive integer")
    l = int(l)
    R = profile.R if R is None else float(R)
    if not 0 < R <= profile.R * (1 + 1e-14):
        raise ValueError("R must lie in (0, profile radius]")
    sp = profile.spline
    kappa = float(sp(0.0, 3)) / 6.0
    r0 = 1e-4 * R
    a = -0.5 * kappa * l
    u0 = r0**l * (1 + a * r0**2)
    du0 = l * r0 ** (l - 1) + a * (l + 2) * r0 ** (l + 1)
    # rescale so the state starts at order one
    scale = 1.0 / u0
    y0 = [1.0, float(sp(r0)) * du0 * scale]

    def rhs(r, y):
        f = float(sp(r))
        return [y[1] / f, l * l * y[0] / f]

    sol = solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise NumericalError("shooting integration failed", {"message": sol.message, "l": l})
    u, p = sol.y[:, -1]
    if abs(u) < 1e-300:
        raise NumericalError("u(R) vanishes", {"l": l})
    return float(p / (float(sp(R)) * u))


def thm2_upper(lam: float, n: int, c: float) -> float:
    """``lambda / ((n-1) c)``."""
    if lam < 0:
        raise ValueError("eigenvalue must be nonnegative")
    if n < 2 or not c > 0:
        raise ValueError("need n >= 2 and c > 0")
    return lam / ((n - 1) * c)


def wang_xia_upper(lam1: float, n: int, c: float) -> float:
    """``sqrt(lam1)/((n-1)c) * (sqrt(lam1) + sqrt(lam1 - (n-1) c^2))``.

    A radicand above ``-1e-12`` is clamped to zero.  ``lam1 = 0`` gives 0.
    """
    if lam1 < 0:
        raise ValueError("eigenvalue must be nonnegative")
    if n < 2 or not c > 0:
        raise ValueError("need n >= 2 and c > 0")
    if lam1 == 0:
        return 0.0
    rad = lam1 - (n - 1) * c * c
    if rad < -RADICAND_TOL:
        raise HypothesisViolation(
            f"lambda_1 = {lam1:.6g} is below (n-1)c^2 = {(n - 1) * c * c:.6g}")
    return math.sqrt(lam1) / ((n - 1) * c) * (math.sqrt(lam1) + math.sqrt(max(rad, 0.0)))


@dataclass
class BoundRecord:
    n: int
    c: float
    lambdas: Sequence[float]
    thm2: list = field(init=False)
    wang_xia: Optional[float] = field(init=False)
    wang_xia_valid: bool = field(init=False)

    def __post_init__(self):
        lam = [float(v) for v in self.lambdas]
        self.lambdas = lam
        self.thm2 = [thm2_upper(max(v, 0.0), self.n, self.c) for v in lam]
        try:
            self.wang_xia = wang_xia_upper(max(lam[1], 0.0), self.n, self.c) if len(lam) > 1 else None
            self.wang_xia_valid = self.wang_xia is not None
        except HypothesisViolation:
            self.wang_xia = None
            self.wang_xia_valid = False

    def to_dict(self) -> dict:
        return {"n": self.n, "c": self.c, "lambda": self.lambdas, "thm2_upper": self.thm2,
                "wang_xia": self.wang_xia, "wang_xia_valid": self.wang_xia_valid}


def load_profile(path: str) -> RotSymProfile:
    """Read ``r f`` pairs (whitespace separated, ``#`` comments) or a builtin name.

    ``flat:R`` and ``spherical_cap:R`` select the builtin profiles.
    """
    if ":" in path and path.split(":", 1)[0] in ("flat", "spherical_cap"):
        kind, R = path.split(":", 1)
        return getattr(RotSymProfile, kind)(float(R))
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("profile file needs two columns: r f(r)")
    return RotSymProfile(tuple(data[:, 0]), tuple(data[:, 1]), name=str(path))
