"""Acceptance criteria, each run at its stated tolerance.

Every test records one ``CRITERION n: PASS|FAIL`` line (printed and repeated
in the pytest terminal summary). Criteria that the simulated noise model
cannot meet are left failing; see the project notes for the analysis.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, LSM_LIKE, NOMINAL, observe

from gyrocal import cli
from gyrocal.estimator import SolverConfig, solve_ils
from gyrocal.evaluation import (
    CONVERGENCE_CASES,
    before_after_metrics,
    campaign_moments,
    default_speed_grid,
    run_campaign,
    solve_batch,
    speed_sweep,
)
from gyrocal.files import read_log_csv
from gyrocal.model import PARAM_NAMES, CalibrationParams, apply_calibration
from gyrocal.protocol import g_optimal_protocol
from gyrocal.simulator import (
    TRIAL_STREAM,
    ExtremeConfig,
    SimConfig,
    noiseless,
    simulate_observations,
    simulate_protocol_run,
    simulate_sine_tracking,
    trial_rng,
)

pytestmark = pytest.mark.acceptance

PROTOCOL = g_optimal_protocol(1.0)
CASE_1_CONVERGED_ROW = np.array([1.9071, 1.9539, 1.5640, 0.0822, 0.0243, -0.0797])


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


def test_c01_exact_identifiability():
    cfg = noiseless(SimConfig(scale_range=(0.5, 2.0), bias_range=(-0.2, 0.2), seed=101))
    t0 = time.perf_counter()
    rep = run_campaign(cfg, n_truths=1000, n_trials=1, omega=1.0, solver_cfg=SolverConfig(tolerance=1e-12))
    elapsed = time.perf_counter() - t0
    worst = float(np.max(np.abs(rep.estimates - rep.truths)))
    ok = rep.n_failed == 0 and worst < 1e-9 and elapsed < 5.0
    record(1, ok, f"1000 truths, max |error| {worst:.2e} (< 1e-9), {elapsed:.2f} s (< 5 s), failed {rep.n_failed}")


@pytest.mark.slow
def test_c02_convergence_count():
    fractions = []
    for idx, truth in enumerate(CONVERGENCE_CASES):
        cfg = SimConfig(seed=200 + idx)
        moments = np.array(
            [simulate_observations(truth, PROTOCOL, cfg, trial_rng(cfg.seed, TRIAL_STREAM, 0, j)) for j in range(1000)]
        )
        est, passes, status = solve_batch(moments, 1.0)
        fractions.append(float(np.mean((status == 0) & (passes <= 3))))
        if idx == 0:
            case1_median = np.median(est[status == 0], axis=0)
            case1_hist = np.bincount(passes[status == 0])
    dev = np.abs(case1_median - CASE_1_CONVERGED_ROW)
    ok = min(fractions) >= 0.99 and np.all(dev <= 5e-3)
    record(
        2,
        ok,
        f"share converged in <= 3 passes per case {_fmt(fractions)} (>= 0.99); "
        f"case-1 pass histogram {case1_hist.tolist()}; "
        f"case-1 median estimate minus converged row {_fmt(case1_median - CASE_1_CONVERGED_ROW)} (|.| <= 5e-3)",
    )


def _band_fractions(rep, scale_band, bias_band):
    inside = np.abs(rep.errors) <= np.array([scale_band] * 3 + [bias_band] * 3)
    return float(inside[:, :3].mean()), float(inside[:, 3:].mean())


@pytest.mark.slow
def test_c03_error_bands_normal():
    t0 = time.perf_counter()
    parts, ok = [], True
    for sigma, scale_band, bias_band in ((0.035, 9.3e-4, 3.0e-3), (0.2, 5.4e-3, 1.7e-2)):
        rep = run_campaign(SimConfig(noise_sigma=sigma, seed=300), 10, 200, omega=1.0)
        fs, fb = _band_fractions(rep, scale_band, bias_band)
        ok &= rep.n_failed == 0 and fs >= 0.9 and fb >= 0.9
        parts.append(
            f"sigma={sigma}: scale {fs:.3f} in +-{scale_band:g}, bias {fb:.3f} in +-{bias_band:g}, "
            f"median k error {_fmt(rep.median[:3])}"
        )
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    record(3, ok, "; ".join(parts) + f"; {elapsed:.1f} s (< 120 s); need >= 0.90")


@pytest.mark.slow
def test_c04_error_bands_extreme():
    parts, ok = [], True
    for sigma, band in ((0.035, 3e-3), (0.2, 1.8e-2)):
        rep = run_campaign(ExtremeConfig(noise_sigma=sigma, seed=400), 10, 200, omega=1.0)
        fs, fb = _band_fractions(rep, band, band)
        ok &= rep.n_failed == 0 and fs >= 0.9 and fb >= 0.9
        parts.append(f"sigma={sigma}: scale {fs:.3f}, bias {fb:.3f} in +-{band:g}")
    record(4, ok, "; ".join(parts) + "; need >= 0.90")


@pytest.mark.slow
def test_c05_sweep_shape():
    grid = default_speed_grid()
    i03 = int(np.argmin(np.abs(grid - 0.3)))
    i10 = int(np.argmin(np.abs(grid - 1.0)))
    curves = {}
    parts, ok = [], True
    for sigma in (0.035, 0.2):
        rep = speed_sweep(SimConfig(noise_sigma=sigma, seed=500), grid, n_truths=5, n_trials=100)
        s, b = rep.scale_mse, rep.bias_mse
        curves[sigma] = s
        drop = s[i03] / s[i10]
        plateau = s[i10:]
        spread = max(plateau.max() / plateau.mean(), plateau.mean() / plateau.min())
        bias_ratio = b.max() / b.min()
        ok &= drop >= 5.0 and spread < 2.0 and bias_ratio < 3.0
        parts.append(
            f"sigma={sigma}: MSE(0.3)/MSE(1.0) {drop:.2f} (>= 5), plateau spread {spread:.2f} (< 2), "
            f"bias max/min {bias_ratio:.2f} (< 3)"
        )
    above = bool(np.all(curves[0.2] >= curves[0.035]))
    ok &= above
    parts.append(f"sigma=0.2 curve >= sigma=0.035 curve pointwise: {above}")
    record(5, ok, "; ".join(parts))


def test_c06_ils_equals_lm():
    _, moments = campaign_moments(SimConfig(seed=600), 10, 10, 1.0)
    ils, _, st_i = solve_batch(moments, 1.0, "ils")
    lm, _, st_l = solve_batch(moments, 1.0, "lm")
    both = (st_i == 0) & (st_l == 0)
    worst = np.max(np.abs(ils[both] - lm[both]), axis=0)
    ok = bool(np.all(both)) and bool(np.all(worst < 1e-6))
    record(6, ok, f"100 datasets, max |ILS - LM| per parameter {_fmt(worst)} (< 1e-6), both converged {int(both.sum())}/100")


@pytest.mark.slow
def test_c07_unbiasedness():
    rep = run_campaign(SimConfig(seed=700), 10, 200, omega=1.0)
    med, se = rep.median, rep.median_se
    inside = np.abs(med) <= se
    detail = ", ".join(f"{n} {m:+.2e}/{s:.1e}" for n, m, s in zip(PARAM_NAMES, med, se))
    record(7, bool(np.all(inside)), f"median/SE per parameter: {detail}; need |median| <= SE")


def test_c08_sine_tracking():
    cfg = SimConfig(seed=800)
    estimate = solve_ils(observe(NOMINAL, cfg, seed=cfg.seed, key=(1, 0, 0))).params
    run = simulate_sine_tracking(NOMINAL, estimate, 1.0, 0.75, cfg, trial_rng(cfg.seed, 3, 0))
    rms_before = np.sqrt(np.mean((run.raw - run.actual) ** 2, axis=0))
    rms_after = np.sqrt(np.mean((run.calibrated - run.actual) ** 2, axis=0))
    ratio = rms_after / rms_before
    record(
        8,
        bool(np.all(ratio <= 0.10)),
        f"RMS before {_fmt(rms_before)}, after {_fmt(rms_after)}, after/before {_fmt(ratio)} (<= 0.10)",
    )


def test_c09_hardware_substitute(tmp_path, capsys):
    truth = {n: float(v) for n, v in zip(PARAM_NAMES, LSM_LIKE.as_array())}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 900, "truth": truth}))
    log = tmp_path / "lsm.csv"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(log)]) == 0
    reports = {}
    for solver in ("ils", "lm"):
        out = tmp_path / f"{solver}.json"
        code = cli.main(["calibrate", str(log), "--config", str(cfg), "--solver", solver, "--out", str(out)])
        assert code == 0
        reports[solver] = out
    diff_path = tmp_path / "diff.json"
    cli.main(["compare", str(reports["ils"]), str(reports["lm"]), "--format", "json", "--out", str(diff_path)])
    n_flagged = json.loads(diff_path.read_text())["n_flagged"]

    # regenerate the same run in memory for the true body rate
    run = simulate_protocol_run(LSM_LIKE, PROTOCOL, SimConfig(seed=900), trial_rng(900, TRIAL_STREAM, 0, 0))
    raw = read_log_csv(log).m
    assert raw.tobytes() == run.log.m.tobytes()
    est = CalibrationParams(**json.loads(reports["ils"].read_text())["params"])
    m = before_after_metrics(run.log.actual, raw, apply_calibration(est, raw))
    ok = bool(np.all(m.ratio >= 10.0)) and n_flagged == 0
    record(
        9,
        ok,
        f"MSE before {_fmt(m.before)}, after {_fmt(m.after)}, ratio {_fmt(m.ratio)} (>= 10); "
        f"compare ILS vs LM flagged {n_flagged} (need 0)",
    )


def test_c10_determinism(tmp_path):
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"campaign": {"n_truths": 2, "n_trials": 5, "grid": [0.5, 1.0, 2.0]}}))
    commands = {
        "simulate": lambda out: ["simulate", "--out", out],
        "calibrate": lambda out: ["calibrate", str(tmp_path / "base.csv"), "--out", out],
        "montecarlo": lambda out: ["montecarlo", "--out", out],
        "montecarlo-csv": lambda out: ["montecarlo", "--format", "csv", "--out", out],
        "sweep": lambda out: ["sweep", "--out", out],
        "convergence": lambda out: ["convergence", "--out", out],
        "compare": lambda out: [
            "compare", str(tmp_path / "ref_a.json"), str(tmp_path / "ref_b.json"), "--out", out
        ],
    }
    assert cli.main(["simulate", "--out", str(tmp_path / "base.csv"), "--seed", "10"]) == 0
    for name, solver in (("ref_a", "ils"), ("ref_b", "lm")):
        cli.main(["calibrate", str(tmp_path / "base.csv"), "--solver", solver, "--out", str(tmp_path / f"{name}.json")])

    mismatched = []
    for name, build in commands.items():
        blobs = []
        for rep in ("1", "2"):
            out = tmp_path / f"{name}.{rep}.out"
            args = build(str(out))
            if name != "compare":
                args += ["--config", str(small), "--seed", "10"]
            assert cli.main(args) == 0, name
            files = sorted(tmp_path.glob(f"{name}.{rep}*"))
            blobs.append(b"".join(f.read_bytes() for f in files))
        if blobs[0] != blobs[1] or not blobs[0]:
            mismatched.append(name)
    record(10, not mismatched, f"{len(commands)} commands rerun, byte-identical: {not mismatched} {mismatched or ''}".strip())
