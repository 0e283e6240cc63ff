"""Command line front end: ``steklov audit|spectrum|identity|oracle``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .errors import SteklovError

log = logging.getLogger("steklov")


def _kv(tokens) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise argparse.ArgumentTypeError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, allow_nan=False))


def cmd_audit(args) -> int:
    from .audit import AuditConfig, exit_code, failed_checks, run_audit, write_outputs

    cfg = AuditConfig.from_json(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    report = run_audit(cfg)
    write_outputs(report, args.json_out or cfg.json_out, args.csv_out or cfg.csv_out,
                  args.tsv_out or cfg.tsv_out)
    code = exit_code(report)
    for shape, h, name in failed_checks(report):
        log.warning("check failed: %s h=%s %s", shape, h, name)
    for row in report["rows"]:
        if row.get("error"):
            log.error("row errored: %s h=%s %s", row["shape"], row["h_target"], row["error"])
    print(f"{len(report['rows'])} rows, exit code {code}")
    return code


def cmd_spectrum(args) -> int:
    from .mesh import generate
    from .shapes import parse_shape
    from .spectra import boundary_spectrum, steklov_spectrum

    mesh = generate(parse_shape(args.shape), target_h=args.h)
    solve = steklov_spectrum if args.problem == "steklov" else boundary_spectrum
    res = solve(mesh, args.k)
    out = res.to_dict()
    out["n_vertices"] = mesh.n_vertices
    out["n_cells"] = mesh.n_cells
    _print_json(out)
    return 0


def cmd_identity(args) -> int:
    from .identities import (hessian_comparison_check, key_inequality_margins, pohozaev_residual,
                             quadric_weight, random_boundary_data, reilly_residual)
    from .mesh import generate
    from .shapes import min_principal_curvature, parse_shape

    shape = parse_shape(args.shape)
    if args.check == "hessian":
        rep = hessian_comparison_check(shape, sample_count=args.samples, band=args.band,
                                       seed=args.seed)
        _print_json(rep.to_dict())
        return 0
    mesh = generate(shape, target_h=args.h)
    if args.check in ("reilly", "pohozaev"):
        fn = reilly_residual if args.check == "reilly" else pohozaev_residual
        V = quadric_weight(shape) if args.V is None else args.V
        _print_json(fn(mesh, args.f, V))
        return 0
    c = min_principal_curvature(shape)
    data = random_boundary_data(mesh, args.samples, seed=args.seed)
    rows = []
    for col in data.T:
        km = key_inequality_margins(mesh, c, col)
        rows.append([km["relative_margin1"], km["relative_margin2"]])
    rows = np.asarray(rows)
    _print_json({"c": c, "h": mesh.h, "count": len(rows),
                 "min_relative_margin1": float(rows[:, 0].min()),
                 "min_relative_margin2": float(rows[:, 1].min())})
    return 0


def cmd_oracle(args) -> int:
    from .oracle import ball_steklov, load_profile, rotsym_steklov, sphere_laplacian

    if args.ball is not None:
        kv = _kv(args.ball)
        n, R = int(kv.get("n", 2)), float(kv.get("R", 1.0))
        _print_json({"n": n, "R": R, "sigma": ball_steklov(n, R, args.k),
                     "lambda": sphere_laplacian(n, R, args.k)})
    else:
        prof = load_profile(args.rotsym)
        _print_json({"profile": prof.name, "R": prof.R,
                     "sigma": {str(l): rotsym_steklov(prof, l) for l in range(1, args.modes + 1)}})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steklov", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("audit", help="run a full audit from a JSON config")
    a.add_argument("--config", required=True)
    a.add_argument("--json-out")
    a.add_argument("--csv-out")
    a.add_argument("--tsv-out")
    a.add_argument("--workers", type=int)
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("spectrum", help="Steklov or boundary Laplacian eigenvalues")
    s.add_argument("--shape", required=True, help='e.g. "ball:R=1,n=2" or "ellipse:2,1"')
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--problem", choices=("steklov", "boundary"), default="steklov")
    s.set_defaults(func=cmd_spectrum)

    i = sub.add_parser("identity", help="integral identities, key inequalities, Hessian check")
    i.add_argument("--check", choices=("reilly", "pohozaev", "key", "hessian"), required=True)
    i.add_argument("--shape", required=True)
    i.add_argument("--h", type=float, default=0.05)
    i.add_argument("--f", default="x**2 - y**2", help="closed-form test function")
    i.add_argument("--V", default=None, help="closed-form weight (default: quadric weight)")
    i.add_argument("--samples", type=int, default=None)
    i.add_argument("--band", type=float, default=0.05)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_identity)

    o = sub.add_parser("oracle", help="closed-form and shooting reference values")
    g = o.add_mutually_exclusive_group(required=True)
    g.add_argument("--ball", nargs="+", metavar="KEY=VALUE", help="n=<int> R=<float>")
    g.add_argument("--rotsym", metavar="PROFILE",
                   help="two-column r f(r) file, or flat:R / spherical_cap:R")
    o.add_argument("--k", type=int, default=7)
    o.add_argument("--modes", type=int, default=3)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "samples", None) is None and args.command == "identity":
        args.samples = 2000 if args.check == "hessian" else 20
    try:
        return args.func(args)
    except (SteklovError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
