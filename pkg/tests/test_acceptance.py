"""End-to-end acceptance checks: one test per criterion, at the stated tolerances
and runtime budgets, each printing a single PASS/FAIL line.

Run directly (`python tests/test_acceptance.py`) for the summary lines only.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from dirbundle.experiments import BT_EXPECTED, ExperimentConfig, PipelineError, reproduce  # noqa: E402

ALPHA_DEG = 2.0
_CACHE: dict = {}


def run_example(example_id: str):
    """Run an example once per session with the default config; returns (report, wall seconds)."""
    if example_id not in _CACHE:
        start = time.perf_counter()
        try:
            report = reproduce(ExperimentConfig(example_id))
        except PipelineError as exc:
            report = exc.report
        _CACHE[example_id] = (report, time.perf_counter() - start)
    return _CACHE[example_id]


def record(number: int, title: str, predicates: dict, runtime: float | None = None, budget: float | None = None):
    """Print the criterion line and return the overall verdict."""
    if budget is not None:
        predicates = dict(predicates, **{f"runtime {runtime:.1f}s <= {budget:g}s": runtime <= budget})
    ok = all(predicates.values())
    failed = [k for k, v in predicates.items() if not v]
    detail = "all predicates hold" if ok else "failed: " + "; ".join(failed)
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok, failed


def test_criterion_01_cones():
    rep, dt = run_example("cones-3-1")
    m = rep.metrics
    ok, failed = record(1, "cones-3-1", {
        f"dim LD(A1) = 2 (got {m.get('dim_LD_A1')})": m.get("dim_LD_A1") == 2,
        f"dim LD(A2) = 1 (got {m.get('dim_LD_A2')})": m.get("dim_LD_A2") == 1,
        f"GD(A2) covers S^2 within 3 alpha (got {m.get('gd_A2_cover_deg', math.inf):.2f} deg)":
            m.get("gd_A2_cover_deg", math.inf) <= 3 * ALPHA_DEG,
        f"bundle_cone(A1) membership on 21^3 grid (disagreements {m.get('membership_disagreements')})":
            m.get("membership_disagreements") == 0,
    }, dt, 60)
    assert ok, failed


def test_criterion_02_square_cone():
    rep, dt = run_example("square-cone-3-2")
    m = rep.metrics
    ok, failed = record(2, "square-cone-3-2", {
        f"dim LGD(A1+) = 3 (got {m.get('dim_LGD_A1plus')})": m.get("dim_LGD_A1plus") == 3,
        f"dim LGD(B) = 2 (got {m.get('dim_LGD_B')})": m.get("dim_LGD_B") == 2,
        f"GD(B) within 3 alpha of the four planes (got {m.get('gd_B_hausdorff_deg', math.inf):.2f} deg)":
            m.get("gd_B_hausdorff_deg", math.inf) <= 3 * ALPHA_DEG,
    }, dt, 120)
    assert ok, failed


def test_criterion_03_briancon_speder():
    rep, dt = run_example("briancon-speder-3")
    m = rep.metrics
    preds = {}
    for name in ("l", "m", "lambda"):
        ang = m.get(f"normal_{name}_s0.01_deg", math.inf)
        preds[f"normal along {name} within 3 deg (got {ang:.3f})"] = ang <= 3.0
    elev = m.get("gd_max_elevation_deg", 0.0)
    preds[f"GD member >= 30 deg off z=0 (got {elev:.1f})"] = elev >= 30.0
    ok, failed = record(3, "briancon-speder-3", preds, dt, 60)
    assert ok, failed


def test_criterion_04_flat_claims():
    rep, dt = run_example("flat-claims-3-3")
    m = rep.metrics
    lim = 3 * ALPHA_DEG
    ok, failed = record(4, "flat-claims-3-3", {
        f"flat D0 = equator (got {m.get('flat_D_equator_deg', math.inf):.2f} deg)": m.get("flat_D_equator_deg", math.inf) <= lim,
        f"flat GD0 = equator (got {m.get('flat_GD_equator_deg', math.inf):.2f} deg)": m.get("flat_GD_equator_deg", math.inf) <= lim,
        f"bs-graph D0 = equator (got {m.get('bs_D_equator_deg', math.inf):.2f} deg)": m.get("bs_D_equator_deg", math.inf) <= lim,
    }, dt, 60)
    assert ok, failed


def test_criterion_05_oscillator():
    rep, dt = run_example("oscillator-4-9")
    m = rep.metrics
    preds = {
        f"GD(A) has 2 members (got {m.get('gd_A_members')})": m.get("gd_A_members") == 2,
        f"GD(h(A)) has >= 10 members (got {m.get('gd_hA_members')})": m.get("gd_hA_members", 0) >= 10,
    }
    for tag in ("up", "down"):
        span = m.get(f"gd_hA_{tag}_span_deg", 0.0)
        preds[f"span around {'+' if tag == 'up' else '-'}e2 >= 80 deg (got {span:.1f})"] = span >= 80.0
    for tag in ("A", "hA"):
        v = m.get(f"ssp_{tag}_verdict")
        preds[f"ssp passes on {tag} (got {v})"] = v == "pass"
    ok, failed = record(5, "oscillator-4-9", preds, dt, 60)
    assert ok, failed


def test_criterion_06_bt_family():
    rep, dt = run_example("bt-family-6-1")
    m = rep.metrics
    preds = {}
    for t, (m1, mm) in sorted(BT_EXPECTED.items()):
        tag = f"t{t:g}"
        preds[f"t={t:g}: m1 = {m1} (got {m.get('m1_' + tag + '_counts')})"] = m.get(f"m1_{tag}") == m1
        preds[f"t={t:g}: m = {mm} (got {m.get('m_' + tag + '_counts')})"] = m.get(f"m_{tag}") == mm
        preds[f"t={t:g}: stable across 128/256"] = bool(m.get(f"stable_{tag}"))
    ok, failed = record(6, "bt-family-6-1", preds, dt, 600)
    assert ok, failed


def test_criterion_07_dense_ssp():
    rep, dt = run_example("dense-ssp-5-4")
    m = rep.metrics
    frac = m.get("pass_fraction", 0.0)
    ok, failed = record(7, "dense-ssp-5-4", {
        f"20 smooth points sampled (got {m.get('points')})": m.get("points") == 20,
        f"ssp passes at >= 90% (got {100 * frac:.0f}%)": frac >= 0.9,
    }, dt, 300)
    assert ok, failed


def test_criterion_08_inclusion():
    rep, dt = run_example("inclusion-suite")
    m = rep.metrics
    preds = {}
    for mname in ("identity", "shear-linear", "rotation"):
        for gid in ("cone-a1", "line", "plane"):
            ex = m.get(f"excess_{mname}_{gid}_deg", math.inf)
            preds[f"{mname} x {gid} excess <= 2 alpha (got {ex:.2f} deg)"] = ex <= 2 * ALPHA_DEG
    sx = m.get("sequence_excess_deg", math.inf)
    preds[f"sequence inclusion on shear/cone-a1 (got {sx:.2f} deg)"] = sx <= 2 * ALPHA_DEG
    ok, failed = record(8, "inclusion suite", preds, dt, 180)
    assert ok, failed


def test_criterion_09_negative_controls():
    rep, dt = run_example("negative-controls")
    m = rep.metrics
    ratio = m.get("gapped_max_ratio", math.nan)
    ok, failed = record(9, "negative controls", {
        f"ssp fails on gapped-ray (got {m.get('gapped_verdict')})": m.get("gapped_verdict") == "fail",
        f"gap ratio ~ 1/3 (got {ratio:.3f})": abs(ratio - 1 / 3) <= 0.05,
        f"log-spiral not converged (got converged={m.get('log_spiral_converged')})": m.get("log_spiral_converged") is False,
        f"shear-abs not directional on full x-axis (got {m.get('directional_full')})": m.get("directional_full") is False,
        f"shear-abs directional on positive half (got {m.get('directional_half')})": m.get("directional_half") is True,
    }, dt, 120)
    assert ok, failed


def test_criterion_10_pompeiu():
    rep, dt = run_example("pompeiu-5-9")
    m = rep.metrics
    q = np.asarray(m.get("quotients", [[math.inf] * 3]), dtype=float)
    ctrl = np.asarray(m.get("control_quotients", [0.0]), dtype=float)
    ok, failed = record(10, "pompeiu-5-9", {
        f"{q.shape[0]} probes (want 10)": q.shape[0] == 10,
        "quotients decrease across delta at every probe": bool(np.all(np.diff(q, axis=1) < 0)),
        f"quotients < 0.05 at delta=1e-5 (max {q[:, -1].max():.4f})": bool(np.all(q[:, -1] < 0.05)),
        f"control point quotients >= 0.01 (min {ctrl.min():.3f})": bool(np.all(ctrl >= 0.01)),
        "f(0) < f(1/2) < f(1)": bool(m.get("monotone")),
    }, dt, 30)
    assert ok, failed


def test_criterion_11_umbrella():
    rep, dt = run_example("umbrella-2-3")
    m = rep.metrics
    ok, failed = record(11, "umbrella-2-3", {
        f"dim at (0,0,-0.5) = 1 (got {m.get('dim_handle')})": m.get("dim_handle") == 1,
        f"dim at a generic z > 0 point = 2 (got {m.get('dim_sheet')})": m.get("dim_sheet") == 2,
    }, dt, 30)
    assert ok, failed


# criteria re-run for the determinism check: every example with a budget of two minutes or less
DETERMINISM_IDS = ("cones-3-1", "square-cone-3-2", "briancon-speder-3", "flat-claims-3-3", "oscillator-4-9",
                   "negative-controls", "pompeiu-5-9", "umbrella-2-3")


def test_criterion_12_determinism():
    preds = {}
    for ex in DETERMINISM_IDS:
        first, _ = run_example(ex)
        try:
            again = reproduce(ExperimentConfig(ex))
        except PipelineError as exc:
            again = exc.report
        preds[f"{ex} byte-identical"] = first.to_json(include_runtime=False) == again.to_json(include_runtime=False)
    ok, failed = record(12, "determinism", preds)
    assert ok, failed


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "--no-header", "-p", "no:cacheprovider"]))
