"""Audit runs over families of domains: spectra, bounds, identities, extrapolation, reports."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .errors import HypothesisViolation, SteklovError
from .identities import (hessian_comparison_check, key_inequality_margins, pohozaev_residual,
                         quadric_weight, random_boundary_data, reilly_residual)
from .mesh import generate
from .oracle import thm2_upper, wang_xia_upper
from .shapes import (Ball, ShapeSpec, distance_field, min_principal_curvature, parse_shape,
                     shape_label, shape_to_dict)
from .spectra import DENSE_LIMIT, boundary_spectrum, cluster_indices, steklov_spectrum

CHECK_NAMES = ("thm1_lower", "thm2_upper_j", "wang_xia_dominates", "ball_equality", "reilly",
               "pohozaev", "key_ineq_1", "key_ineq_2", "hessian_comparison", "rho_max")

EXIT_OK, EXIT_FAILED, EXIT_ERRORED = 0, 2, 3

_IDENTITY_FUNCTIONS = ("x", "x**2 - y**2")


@dataclass
class Tolerances:
    cluster: float = 1e-6
    lower: float = 0.01  # thm1_lower: sigma_1 >= c (1 - lower)
    upper: float = 0.02  # thm2_upper_j: sigma_j <= bound (1 + upper)
    ball: float = 0.01  # ball_equality, relative
    slack_per_h: float = 1.0  # key inequalities: margin >= -slack_per_h * h
    identity_cap: float = 1e-6  # relative to the largest identity term (at least 1)
    hessian: float = 1e-3  # ellipsoids, outside the cut-locus band
    hessian_ball: float = 1e-6
    rho_max: float = 1e-6


@dataclass
class AuditConfig:
    """Shapes, refinement ladder and tolerances of one audit.

    A shape object may carry its own ``"ladder"`` entry which overrides the
    global one.
    """

    shapes: list = field(default_factory=list)
    ladder: tuple = (0.08, 0.04, 0.02)
    k: int = 4
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    random_data: int = 20
    hessian_samples: int = 2000
    hessian_band: float = 0.05
    identities: bool = True
    dense_limit: int = DENSE_LIMIT
    workers: int = 1
    record_timings: bool = False
    json_out: Optional[str] = None
    csv_out: Optional[str] = None
    tsv_out: Optional[str] = None
    shape_ladders: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        shapes, ladders = [], []
        for i, s in enumerate(self.shapes):
            lad = None
            if isinstance(s, dict) and "ladder" in s:
                s = dict(s)
                lad = tuple(float(v) for v in s.pop("ladder"))
            shapes.append(parse_shape(s))
            ladders.append(lad if lad is not None
                           else (self.shape_ladders[i] if i < len(self.shape_ladders) else None))
        self.shapes = shapes
        self.shape_ladders = ladders
        self.ladder = tuple(float(v) for v in self.ladder)
        if isinstance(self.tolerances, dict):
            self.tolerances = Tolerances(**self.tolerances)
        for lad in [self.ladder] + [l for l in ladders if l is not None]:
            if len(lad) == 0 or any(b >= a for a, b in zip(lad, lad[1:])) or min(lad) <= 0:
                raise ValueError(f"ladder {list(lad)} must be positive and strictly decreasing")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def ladder_for(self, i: int) -> tuple:
        return self.shape_ladders[i] or self.ladder

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        d = dict(d)
        out = d.pop("outputs", {}) or {}
        for key in ("json", "csv", "tsv"):
            if key in out:
                d.setdefault(f"{key}_out", out[key])
        known = set(cls.__dataclass_fields__) - {"shape_ladders"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "AuditConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def echo(self) -> dict:
        shapes = []
        for s, lad in zip(self.shapes, self.shape_ladders):
            d = shape_to_dict(s)
            if lad is not None:
                d["ladder"] = list(lad)
            shapes.append(d)
        return {
            "shapes": shapes,
            "ladder": list(self.ladder),
            "k": self.k,
            "seed": self.seed,
            "tolerances": asdict(self.tolerances),
            "random_data": self.random_data,
            "hessian_samples": self.hessian_samples,
            "hessian_band": self.hessian_band,
            "identities": self.identities,
            "dense_limit": self.dense_limit,
        }


# --- extrapolation ----------------------------------------------------------------


def richardson(values: Sequence[float], hs: Sequence[float]) -> dict:
    """Fit ``v(h) = v* + C h**p`` through the three finest ladder points.

    Differences that are not monotonically shrinking make the order
    unreliable; the finest raw value is then returned as the limit.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(hs, dtype=float)
    if len(v) != len(h) or len(v) < 3:
        raise ValueError("richardson needs at least three (h, value) pairs")
    v1, v2, v3 = v[-3:]
    h1, h2, h3 = h[-3:]
    d1, d2 = v1 - v2, v2 - v3
    out = {"extrapolated": float(v3), "order": None, "reliable": False, "finest": float(v3)}
    if d2 == 0.0:
        # already converged to the last digit: no order to report
        out["reliable"] = d1 == 0.0
        return out
    q = d1 / d2
    if q <= 1.0 or not np.isfinite(q):
        return out

    def eq(p):
        return (h1**p - h2**p) / (h2**p - h3**p) - q

    try:
        p = brentq(eq, 1e-6, 50.0, xtol=1e-14, rtol=1e-14)
    except ValueError:
        return out
    ext = v3 - d2 * h3**p / (h2**p - h3**p)
    out.update(extrapolated=float(ext), order=float(p), reliable=True)
    return out


# --- one shape ----------------------------------------------------------------------


def _check(value, bound, ok) -> dict:
    return {"value": _num(value), "bound": _num(bound), "pass": bool(ok)}


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _row(shape: ShapeSpec, target_h: float, cfg: AuditConfig, hess: Optional[dict]) -> dict:
    tol = cfg.tolerances
    t0 = time.perf_counter()
    timings = {}
    n = shape.dim
    c = min_principal_curvature(shape)
    mesh = generate(shape, target_h=target_h)
    timings["mesh"] = time.perf_counter() - t0
    stek = steklov_spectrum(mesh, cfg.k, cfg.dense_limit)
    bnd = boundary_spectrum(mesh, cfg.k, cfg.dense_limit)
    timings["spectra"] = time.perf_counter() - t0 - timings["mesh"]
    sig, lam = stek.eigenvalues, bnd.eigenvalues
    checks: dict = {}
    margins: dict = {"sigma1_minus_c": float(sig[1] - c)}

    checks["thm1_lower"] = _check(sig[1], c, sig[1] >= c * (1 - tol.lower))
    ub = [thm2_upper(max(float(l), 0.0), n, c) for l in lam]
    margins["thm2_upper_minus_sigma"] = [float(ub[j] - sig[j]) for j in range(1, cfg.k + 1)]
    for j in range(1, cfg.k + 1):
        checks[f"thm2_upper_{j}"] = _check(sig[j], ub[j], sig[j] <= ub[j] * (1 + tol.upper))
    try:
        wx = wang_xia_upper(max(float(lam[1]), 0.0), n, c)
        margins["wang_xia_minus_thm2"] = wx - ub[1]
        checks["wang_xia_dominates"] = _check(ub[1], wx, ub[1] <= wx)
    except HypothesisViolation:
        margins["wang_xia_minus_thm2"] = None
        checks["wang_xia_dominates"] = {"value": _num(ub[1]), "bound": None, "pass": False,
                                        "note": "lambda_1 below (n-1)c^2"}
    if isinstance(shape, Ball):
        dev = [abs(sig[j] * (n - 1) * c - lam[j]) / lam[j] for j in range(1, min(n, cfg.k) + 1)]
        dev.append(abs(sig[1] - c) / c)
        checks["ball_equality"] = _check(max(dev), tol.ball, max(dev) <= tol.ball)

    # key inequalities on seeded random data (plus the coordinate x on balls)
    data = random_boundary_data(mesh, cfg.random_data, seed=cfg.seed)
    if isinstance(shape, Ball):
        data = np.column_stack([mesh.vertices[mesh.boundary_vertices, 0], data])
    r1, r2 = [], []
    for col in data.T:
        km = key_inequality_margins(mesh, c, col)
        r1.append(km["relative_margin1"])
        r2.append(km["relative_margin2"])
    slack = tol.slack_per_h * target_h
    checks["key_ineq_1"] = _check(min(r1), -slack, min(r1) >= -slack)
    checks["key_ineq_2"] = _check(min(r2), -slack, min(r2) >= -slack)
    timings["key"] = time.perf_counter() - t0 - sum(timings.values())

    residuals: dict = {
        "steklov_eigen": float(stek.residuals.max()),
        "boundary_eigen": float(bnd.residuals.max()),
        "key_relative_margins": {"min1": float(min(r1)), "min2": float(min(r2)),
                                 "slack": slack},
    }
    if cfg.identities:
        V = quadric_weight(shape)
        for name, fn in (("reilly", reilly_residual), ("pohozaev", pohozaev_residual)):
            per = {}
            worst, ok = 0.0, True
            for f in _IDENTITY_FUNCTIONS:
                r = fn(mesh, f, V)
                scale = max([1.0, abs(r["lhs"]), abs(r["rhs"])] + [abs(t) for t in r["terms"].values()])
                cap = tol.identity_cap * scale
                worst = max(worst, abs(r["residual"]))
                ok = ok and abs(r["residual"]) <= cap
                per[f] = {"lhs": r["lhs"], "rhs": r["rhs"], "residual": r["residual"],
                          "terms": r["terms"], "cap": cap}
            residuals[name] = per
            checks[name] = _check(worst, tol.identity_cap, ok)
        timings["identities"] = time.perf_counter() - t0 - sum(timings.values())

    dist = distance_field(shape, mesh)
    checks["rho_max"] = _check(dist.rho_max, 1.0 / c, dist.rho_max <= 1.0 / c + tol.rho_max)
    if hess is not None:
        checks["hessian_comparison"] = hess
    timings["total"] = time.perf_counter() - t0
    return {
        "shape": shape_label(shape),
        "h_target": target_h,
        "h": float(mesh.h),
        "subdivisions": mesh.subdivisions,
        "n_vertices": mesh.n_vertices,
        "n_cells": mesh.n_cells,
        "c": c,
        "sigma": [float(v) for v in sig],
        "lambda": [float(v) for v in lam],
        "sigma_clusters": cluster_indices(sig, tol.cluster),
        "lambda_clusters": cluster_indices(lam, tol.cluster),
        "margins": margins,
        "checks": checks,
        "residuals": residuals,
        "timings": {k: round(v, 3) for k, v in timings.items()} if cfg.record_timings else None,
        "error": None,
    }


def _hessian_check(shape: ShapeSpec, cfg: AuditConfig) -> dict:
    tol = cfg.tolerances.hessian_ball if isinstance(shape, Ball) else cfg.tolerances.hessian
    rep = hessian_comparison_check(shape, sample_count=cfg.hessian_samples,
                                   band=cfg.hessian_band, seed=cfg.seed)
    out = _check(rep.max_violation, tol, rep.max_violation <= tol)
    out["samples_used"] = rep.samples_used
    out["samples_excluded"] = rep.samples_excluded
    return out


def audit_shape(shape: ShapeSpec, ladder: Sequence[float], cfg: AuditConfig) -> dict:
    """Rows for every ladder entry of one shape plus its extrapolation record."""
    try:
        hess = _hessian_check(shape, cfg)
    except SteklovError as exc:
        hess = {"value": None, "bound": None, "pass": False, "error": _err(exc)}
    rows = []
    for h in ladder:
        try:
            rows.append(_row(shape, h, cfg, hess))
        except (SteklovError, ValueError, ArithmeticError, MemoryError) as exc:
            rows.append({"shape": shape_label(shape), "h_target": h, "error": _err(exc),
                         "checks": {}})
    return {"rows": rows, "extrapolation": _extrapolate(shape, rows, cfg)}


def _err(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def _extrapolate(shape: ShapeSpec, rows: list, cfg: AuditConfig) -> dict:
    tol = cfg.tolerances
    good = [r for r in rows if r.get("error") is None]
    rec: dict = {"shape": shape_label(shape), "ladder": [r["h_target"] for r in good]}
    if not good:
        rec["error"] = "no successful rows"
        return rec
    c = good[0]["c"]
    # nominal mesh width amax/k keeps exact ladder ratios
    amax = float(np.max(shape.axes_array))
    hs = [amax / r["subdivisions"] for r in good]
    checks = {}
    for key, idx in (("sigma1", ("sigma", 1)), ("lambda1", ("lambda", 1))):
        vals = [r[idx[0]][idx[1]] for r in good]
        if len(good) >= 3:
            rec[key] = richardson(vals, hs)
        else:
            rec[key] = {"extrapolated": vals[-1], "order": None, "reliable": False,
                        "finest": vals[-1]}
    s1 = rec["sigma1"]["extrapolated"]
    rec["sigma1_margin"] = s1 - c
    rec["near_equality"] = bool(abs(s1 - c) <= tol.ball * c)
    checks["thm1_lower"] = _check(s1, c, s1 >= c * (1 - tol.lower))
    if isinstance(shape, Ball):
        checks["ball_equality"] = _check(abs(s1 - c) / c, tol.ball, abs(s1 - c) <= tol.ball * c)
    rec["checks"] = checks
    return rec


def _run_one(args):
    shape, ladder, cfg = args
    return audit_shape(shape, ladder, cfg)


def run_audit(config: AuditConfig) -> dict:
    """Audit every configured shape; failures and errors stay confined to their rows."""
    jobs = [(s, config.ladder_for(i), config) for i, s in enumerate(config.shapes)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rows, extra = [], []
    for res in results:
        rows.extend(res["rows"])
        extra.append(res["extrapolation"])
    return {"config_echo": config.echo(), "rows": rows, "extrapolation": extra,
            "version": __version__}


def _iter_checks(report: dict):
    for r in report["rows"]:
        yield from r.get("checks", {}).values()
    for e in report["extrapolation"]:
        yield from e.get("checks", {}).values()


def exit_code(report: dict) -> int:
    if any(r.get("error") for r in report["rows"]) or \
            any(e.get("error") for e in report["extrapolation"]):
        return EXIT_ERRORED
    if not all(ch["pass"] for ch in _iter_checks(report)):
        return EXIT_FAILED
    return EXIT_OK


def failed_checks(report: dict) -> list:
    out = []
    for r in report["rows"]:
        for name, ch in r.get("checks", {}).items():
            if not ch["pass"]:
                out.append((r["shape"], r["h_target"], name))
    for e in report["extrapolation"]:
        for name, ch in e.get("checks", {}).items():
            if not ch["pass"]:
                out.append((e["shape"], "extrapolated", name))
    return out


# --- writers ------------------------------------------------------------------------


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def to_csv(report: dict) -> str:
    k = report["config_echo"]["k"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["shape", "h_target", "h", "c"] + [f"sigma_{j}" for j in range(k + 1)] \
        + [f"lambda_{j}" for j in range(k + 1)] + ["failed_checks", "error"]
    w.writerow(head)
    for r in report["rows"]:
        if r.get("error"):
            w.writerow([r["shape"], r["h_target"]] + [""] * (len(head) - 3) + [r["error"]])
            continue
        failed = ";".join(name for name, ch in r["checks"].items() if not ch["pass"])
        w.writerow([r["shape"], r["h_target"], repr(r["h"]), repr(r["c"])]
                   + [repr(v) for v in r["sigma"]] + [repr(v) for v in r["lambda"]]
                   + [failed, ""])
    return buf.getvalue()


def to_tsv(report: dict) -> str:
    """sigma_1 against h, one gnuplot data block per shape."""
    lines = []
    for e in report["extrapolation"]:
        lines.append(f"# {e['shape']}")
        lines.append("# h\tsigma_1")
        for r in report["rows"]:
            if r["shape"] == e["shape"] and not r.get("error"):
                lines.append(f"{r['h']!r}\t{r['sigma'][1]!r}")
        lines += ["", ""]
    return "\n".join(lines)


def write_outputs(report: dict, json_out=None, csv_out=None, tsv_out=None) -> None:
    for path, fn in ((json_out, to_json), (csv_out, to_csv), (tsv_out, to_tsv)):
        if path:
            with open(path, "w") as fh:
                fh.write(fn(report))
