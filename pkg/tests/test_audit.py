import json
import math

import numpy as np
import pytest

from steklov.audit import (CHECK_NAMES, EXIT_ERRORED, EXIT_FAILED, EXIT_OK, AuditConfig,
                           Tolerances, exit_code, failed_checks, richardson, run_audit, to_csv,
                           to_json, to_tsv, write_outputs)

FAST = dict(ladder=(0.1, 0.05, 0.025), k=3, random_data=5, hessian_samples=200)


@pytest.fixture(scope="module")
def small_report():
    cfg = AuditConfig(shapes=[{"type": "ball", "R": 1.0, "n": 2},
                              {"type": "ellipsoid", "axes": [2.0, 1.0]}], **FAST)
    return run_audit(cfg)


def test_richardson_second_order():
    hs = [0.4, 0.2, 0.1]
    r = richardson([1 + h**2 for h in hs], hs)
    assert r["reliable"]
    assert r["order"] == pytest.approx(2.0, abs=1e-10)
    assert r["extrapolated"] == pytest.approx(1.0, abs=1e-12)


def test_richardson_first_order_nonuniform():
    hs = [0.3, 0.2, 0.1]
    r = richardson([1 + h for h in hs], hs)
    assert r["order"] == pytest.approx(1.0, abs=1e-8)
    assert r["extrapolated"] == pytest.approx(1.0, abs=1e-10)


def test_richardson_uses_three_finest():
    hs = [0.8, 0.4, 0.2, 0.1]
    r = richardson([7.0] + [2 + h**3 for h in hs[1:]], hs)
    assert r["order"] == pytest.approx(3.0, abs=1e-8)


def test_richardson_unreliable():
    hs = [0.4, 0.2, 0.1]
    r = richardson([1.0, 1.1, 1.05], hs)
    assert not r["reliable"] and r["order"] is None
    assert r["extrapolated"] == 1.05
    r = richardson([1.0, 1.01, 1.03], hs)
    assert not r["reliable"]
    exact = richardson([2.0, 2.0, 2.0], hs)
    assert exact["reliable"] and exact["extrapolated"] == 2.0
    with pytest.raises(ValueError):
        richardson([1.0, 2.0], [0.2, 0.1])


def test_empty_config():
    rep = run_audit(AuditConfig())
    assert rep["rows"] == [] and rep["extrapolation"] == []
    assert exit_code(rep) == EXIT_OK
    json.loads(to_json(rep))


def test_config_validation():
    with pytest.raises(ValueError):
        AuditConfig(ladder=(0.02, 0.04))
    with pytest.raises(ValueError):
        AuditConfig(ladder=(0.04, 0.04))
    with pytest.raises(ValueError):
        AuditConfig(ladder=(0.04, -0.02))
    with pytest.raises(ValueError):
        AuditConfig(k=0)
    with pytest.raises(ValueError):
        AuditConfig.from_dict({"shapes": [], "bogus": 1})
    with pytest.raises(ValueError):
        AuditConfig(shapes=[{"type": "ball", "R": 1.0, "n": 2, "ladder": [0.1, 0.2]}])


def test_config_from_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({
        "shapes": [{"type": "ball", "R": 1.0, "n": 2},
                   {"type": "ellipsoid", "axes": [1.5, 1.2, 1.0], "ladder": [0.3, 0.2]}],
        "ladder": [0.08, 0.04], "k": 2, "tolerances": {"lower": 0.02},
        "outputs": {"json": "a.json", "csv": "a.csv"}}))
    cfg = AuditConfig.from_json(str(p))
    assert cfg.ladder_for(0) == (0.08, 0.04) and cfg.ladder_for(1) == (0.3, 0.2)
    assert isinstance(cfg.tolerances, Tolerances) and cfg.tolerances.lower == 0.02
    assert cfg.json_out == "a.json" and cfg.csv_out == "a.csv"
    echo = cfg.echo()
    assert echo["shapes"][1]["ladder"] == [0.3, 0.2]
    assert AuditConfig.from_dict(echo).echo() == echo


def test_small_audit_passes(small_report):
    rep = small_report
    assert exit_code(rep) == EXIT_OK, failed_checks(rep)
    assert len(rep["rows"]) == 6
    disk, ell = rep["extrapolation"]
    assert disk["sigma1"]["extrapolated"] == pytest.approx(1.0, rel=2e-3)
    assert disk["near_equality"] and "ball_equality" in disk["checks"]
    assert ell["sigma1"]["extrapolated"] > 0.25 and not ell["near_equality"]
    assert "ball_equality" not in ell["checks"]


def test_check_names_enumerated(small_report):
    for row in small_report["rows"]:
        for name in row["checks"]:
            base = "thm2_upper_j" if name.startswith("thm2_upper_") else name
            assert base in CHECK_NAMES
        assert row["timings"] is None
        assert {"shape", "h", "c", "sigma", "lambda", "checks", "residuals"} <= set(row)
        for ch in row["checks"].values():
            assert set(ch) >= {"value", "bound", "pass"}


def test_fault_isolation():
    cfg = AuditConfig(shapes=[{"type": "ball", "R": 1.0, "n": 2, "ladder": [0.9, 0.2]},
                              {"type": "ellipsoid", "axes": [2.0, 1.0], "ladder": [0.2]}],
                      k=2, random_data=3, hessian_samples=100, identities=False)
    rep = run_audit(cfg)
    assert rep["rows"][0]["error"] is not None
    assert rep["rows"][1]["error"] is None and rep["rows"][2]["error"] is None
    assert exit_code(rep) == EXIT_ERRORED
    assert "error" in to_csv(rep).splitlines()[0]


def test_failed_check_gives_exit_two():
    # an impossible tolerance makes the ball equality fail without errors
    cfg = AuditConfig(shapes=[{"type": "ball", "R": 1.0, "n": 2}], ladder=(0.2,), k=2,
                      random_data=3, hessian_samples=100, identities=False,
                      tolerances={"ball": 1e-12})
    rep = run_audit(cfg)
    assert exit_code(rep) == EXIT_FAILED
    names = [n for *_, n in failed_checks(rep)]
    assert "ball_equality" in names


def test_timings_recorded():
    cfg = AuditConfig(shapes=[{"type": "ball", "R": 1.0, "n": 2}], ladder=(0.2,), k=1,
                      random_data=2, hessian_samples=50, identities=False, record_timings=True)
    row = run_audit(cfg)["rows"][0]
    assert row["timings"]["total"] >= 0


def test_deterministic_and_writers(tmp_path):
    cfg = AuditConfig(shapes=[{"type": "ellipsoid", "axes": [2.0, 1.0]}], ladder=(0.2, 0.1),
                      k=2, random_data=4, hessian_samples=100)
    a, b = run_audit(cfg), run_audit(cfg)
    assert to_json(a) == to_json(b)
    write_outputs(a, tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "r.tsv")
    assert json.loads((tmp_path / "r.json").read_text())["version"]
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("shape,h_target")
    tsv = to_tsv(a)
    assert tsv.startswith("# ellipsoid") and len([l for l in tsv.splitlines()
                                                  if l and not l.startswith("#")]) == 2


def test_parallel_matches_serial():
    kw = dict(shapes=[{"type": "ball", "R": 1.0, "n": 2}, {"type": "ball", "R": 2.0, "n": 2}],
              ladder=(0.3,), k=1, random_data=2, hessian_samples=50, identities=False)
    serial = run_audit(AuditConfig(**kw))
    par = run_audit(AuditConfig(workers=2, **kw))
    assert to_json(serial) == to_json(par)
