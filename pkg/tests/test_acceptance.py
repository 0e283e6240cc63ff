"""End-to-end acceptance criteria, one PASS/FAIL line each.

The lines are printed as the tests run and repeated in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from steklov.audit import AuditConfig, audit_shape, exit_code, run_audit, to_json
from steklov.fem import system
from steklov.identities import (hessian_comparison_check, key_inequality_margins,
                                pohozaev_residual, quadric_weight, random_boundary_data,
                                reilly_residual)
from steklov.mesh import generate
from steklov.oracle import (ball_steklov, rotsym_steklov, sphere_laplacian, thm2_upper,
                            wang_xia_upper)
from steklov.shapes import Ball, Ellipsoid, RotSymProfile, distance_field, min_principal_curvature
from steklov.spectra import boundary_spectrum, steklov_spectrum

pytestmark = pytest.mark.slow

LADDER = (0.08, 0.04, 0.02)
SHAPES_2D = [{"type": "ball", "R": 1.0, "n": 2}, {"type": "ball", "R": 2.0, "n": 2},
             {"type": "ellipsoid", "axes": [2.0, 1.0]}]
RESULTS = []


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _cfg(shapes):
    return AuditConfig(shapes=shapes, ladder=LADDER, k=4, seed=0)


@pytest.fixture(scope="module")
def audit_2d():
    t0 = time.perf_counter()
    rep = run_audit(_cfg(SHAPES_2D))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ball3():
    mesh = generate(Ball(1.0, n=3), subdivisions=18)
    t0 = time.perf_counter()
    s = steklov_spectrum(mesh, 4)
    b = boundary_spectrum(mesh, 4)
    return mesh, s, b, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ellipsoid3():
    shape = Ellipsoid((1.5, 1.2, 1.0))
    mesh = generate(shape, target_h=0.2)
    return shape, mesh, steklov_spectrum(mesh, 4), boundary_spectrum(mesh, 4)


def test_criterion_1_ball_equality_2d():
    cfg = _cfg(SHAPES_2D[:2])
    out = []
    ok = True
    for shape, lo, hi in zip(cfg.shapes, (0.998, 0.499), (1.002, 0.501)):
        t0 = time.perf_counter()
        res = audit_shape(shape, LADDER, cfg)
        dt = time.perf_counter() - t0
        s1 = res["extrapolation"]["sigma1"]["extrapolated"]
        ok = ok and lo <= s1 <= hi and dt <= 60.0
        out.append(f"sigma1={s1:.6f} in [{lo}, {hi}], {dt:.1f}s")
    report(1, ok, "; ".join(out))


def test_criterion_2_ball_equality_3d(ball3):
    mesh, s, b, dt = ball3
    sig, lam = s.eigenvalues[1:4], b.eigenvalues[1:4]
    c = 1.0
    dev = np.abs(sig * 2 * c - lam) / lam
    ok = (mesh.n_cells >= 100_000 and np.all(np.abs(sig - 1) <= 0.03)
          and np.all(np.abs(lam - 2) <= 0.06) and np.all(dev <= 0.05) and dt <= 600)
    report(2, ok, f"{mesh.n_cells} tets, sigma={np.round(sig, 5).tolist()}, "
                  f"lambda={np.round(lam, 5).tolist()}, max rel dev={dev.max():.2e}, {dt:.0f}s")


def test_criterion_3_strict_lower_bound(audit_2d, ellipsoid3):
    rep, _ = audit_2d
    ext = [e for e in rep["extrapolation"] if e["shape"].startswith("ellipsoid")][0]
    s1 = ext["sigma1"]["extrapolated"]
    shape, _, s, _ = ellipsoid3
    c3 = min_principal_curvature(shape)
    ok = (s1 >= 0.25 * 0.99 and ext["sigma1_margin"] > 0 and not ext["near_equality"]
          and math.isclose(c3, 1.0 / 1.5**2) and s.eigenvalues[1] >= c3 * 0.97)
    report(3, ok, f"ellipse sigma1={s1:.6f} margin={ext['sigma1_margin']:.4f}; "
                  f"ellipsoid sigma1={s.eigenvalues[1]:.4f} c={c3:.4f}")


def test_criterion_4_upper_bounds(audit_2d, ball3, ellipsoid3):
    rep, _ = audit_2d
    fails = 0
    rows = 0
    spectra = [(r["sigma"], r["lambda"], 2, r["c"]) for r in rep["rows"]]
    spectra.append((ball3[1].eigenvalues, ball3[2].eigenvalues, 3, 1.0))
    shape, _, s, b = ellipsoid3
    spectra.append((s.eigenvalues, b.eigenvalues, 3, min_principal_curvature(shape)))
    for sig, lam, n, c in spectra:
        rows += 1
        for j in range(1, 5):
            fails += sig[j] > thm2_upper(max(lam[j], 0.0), n, c) * 1.02
        fails += thm2_upper(lam[1], n, c) > wang_xia_upper(lam[1], n, c)
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(2, 4))
        c = float(np.exp(rng.uniform(-5, 5)))
        lam = (n - 1) * c * c * (1 + float(np.exp(rng.uniform(-20, 5))))
        fails += thm2_upper(lam, n, c) > wang_xia_upper(lam, n, c)
    report(4, fails == 0, f"{rows} spectra x 4 modes + 10000 random triples, {fails} failures")


def test_criterion_5_key_inequalities():
    shape = Ellipsoid((2.0, 1.0))
    c = min_principal_curvature(shape)
    worst = {}
    for h in (0.02, 0.01):
        mesh = generate(shape, target_h=h)
        data = random_boundary_data(mesh, 20, seed=0)
        m = [key_inequality_margins(mesh, c, col) for col in data.T]
        worst[h] = min(min(k["relative_margin1"], k["relative_margin2"]) for k in m)
    v02, v01 = max(0.0, -worst[0.02]), max(0.0, -worst[0.01])
    shrink_ok = v02 == 0.0 and v01 == 0.0 or v01 * 1.5 <= v02
    disk = generate(Ball(1.0, n=2), target_h=0.02)
    kx = key_inequality_margins(disk, 1.0, disk.vertices[disk.boundary_vertices, 0])
    ok = (worst[0.02] >= -0.02 and shrink_ok and abs(kx["relative_margin1"]) <= 0.02
          and abs(kx["relative_margin2"]) <= 0.02)
    note = "no violation at either h" if v02 == 0.0 and v01 == 0.0 else \
        f"violation {v02:.2e} -> {v01:.2e}"
    report(5, ok, f"ellipse min relative margin {worst[0.02]:.4f} (h=0.02), "
                  f"{worst[0.01]:.4f} (h=0.01), {note}; disk x margins "
                  f"{kx['relative_margin1']:.1e}, {kx['relative_margin2']:.1e}")


def test_criterion_6_identity_residuals():
    meshes = [generate(Ball(1.0, n=2), target_h=h) for h in LADDER]
    V = quadric_weight(meshes[0].shape)
    parts = []
    ok = True
    for f in ("x", "x**2 - y**2", "1"):
        for name, fn in (("reilly", reilly_residual), ("pohozaev", pohozaev_residual)):
            out = [fn(m, f, V) for m in meshes]
            res = [abs(o["residual"]) for o in out]
            scale = max(1.0, *(abs(t) for o in out for t in o["terms"].values()))
            if max(res) <= 1e-12 * scale:
                parts.append(f"{name}({f}) at roundoff floor {max(res):.1e}")
                continue
            orders = [math.log(res[i] / res[i + 1], 2) for i in range(2)]
            good = res[-1] <= 1e-6 and min(orders) >= 1.5
            ok = ok and good
            parts.append(f"{name}({f}) {res[-1]:.1e} order {min(orders):.1f}")
    report(6, ok, "; ".join(parts))


def test_criterion_7_hessian_comparison():
    ball = Ball(1.0, n=2)
    ell = Ellipsoid((2.0, 1.0))
    rb = hessian_comparison_check(ball, sample_count=2000)
    re = hessian_comparison_check(ell, sample_count=2000, band=0.05)
    rho_ok = True
    for shape in (ball, ell):
        d = distance_field(shape, generate(shape, target_h=0.04))
        rho_ok = rho_ok and d.rho_max <= 1.0 / min_principal_curvature(shape) + 1e-6
    ok = rb.max_violation <= 1e-6 and re.max_violation <= 1e-3 and rho_ok
    report(7, ok, f"ball {rb.max_violation:.1e} ({rb.samples_used} samples), ellipse "
                  f"{re.max_violation:.1e} ({re.samples_excluded} excluded), rho_max ok={rho_ok}")


def test_criterion_8_oracles():
    err = 0.0
    for R in (0.5, 1.0, 2.0):
        prof = RotSymProfile.flat(R)
        for l in range(1, 7):
            err = max(err, abs(rotsym_steklov(prof, l) * R / l - 1))
    disk = generate(Ball(1.0, n=2), target_h=0.02)
    fem = steklov_spectrum(disk, 1).eigenvalues[1]
    cross = abs(rotsym_steklov(RotSymProfile.flat(1.0), 1) / fem - 1)
    rel_ok = True
    for n in (2, 3):
        for R in (0.5, 1.0, 2.0):
            count = 1 + sum(2 if n == 2 else 2 * m + 1 for m in range(1, 7))
            for s, lam in zip(ball_steklov(n, R, count), sphere_laplacian(n, R, count)):
                rel_ok = rel_ok and math.isclose(lam * R, s * (s * R + n - 2),
                                                 rel_tol=1e-14, abs_tol=1e-14)
    ok = err <= 1e-8 and cross <= 0.005 and rel_ok
    report(8, ok, f"flat shooting rel err {err:.1e}, FEM cross {cross:.1e}, "
                  f"ball/sphere relation exact={rel_ok}")


def test_criterion_9_determinism(audit_2d):
    first, dt = audit_2d
    second = run_audit(_cfg(SHAPES_2D))
    a, b = to_json(first).encode(), to_json(second).encode()
    report(9, a == b and exit_code(first) == 0,
           f"{len(a)} bytes, identical={a == b}, exit code {exit_code(first)}, first run {dt:.0f}s")
