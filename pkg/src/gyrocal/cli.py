"""``gyrocal`` command-line interface.

Subcommands::

    gyrocal simulate     --out run.csv          # labelled sample log + sidecars
    gyrocal calibrate    run.csv --out report.json
    gyrocal montecarlo   --out mc.json
    gyrocal sweep        --out sweep.csv --format csv
    gyrocal compare      a.json b.json
    gyrocal convergence  --out conv.json

The config file comes from ``--config`` or, if absent, the path in the
``GYROCAL_CONFIG`` environment variable. Outputs carry no timestamps, so a
rerun with the same config and seed is byte-identical.

Exit codes: 0 success, 1 I/O error, 2 invalid config, 3 malformed input file,
4 segmentation failure, 5 singular design, 6 solver did not converge,
7 unphysical estimate.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from gyrocal import __version__
from gyrocal.config import RunConfig, parse_config
from gyrocal.errors import (
    ConfigError,
    ConvergenceError,
    LogFormatError,
    SegmentationError,
    SingularDesignError,
    UnphysicalEstimateError,
)
from gyrocal.estimator import EstimationResult, residuals, solve
from gyrocal.evaluation import CONVERGENCE_CASES, convergence_study, run_campaign, speed_sweep
from gyrocal.files import config_hash, dumps, read_json, read_log_csv, write_json, write_log_csv
from gyrocal.model import PARAM_NAMES
from gyrocal.protocol import Protocol, g_optimal_protocol, observations_from, segment_log
from gyrocal.simulator import TRIAL_STREAM, TRUTH_STREAM, draw_truth, simulate_protocol_run, trial_rng

CONFIG_ENV = "GYROCAL_CONFIG"
AGREEMENT_BAR = 1e-3

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_SEGMENTATION = 4
EXIT_SINGULAR = 5
EXIT_CONVERGENCE = 6
EXIT_UNPHYSICAL = 7

# most specific first
_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (LogFormatError, EXIT_PARSE),
    (SegmentationError, EXIT_SEGMENTATION),
    (SingularDesignError, EXIT_SINGULAR),
    (ConvergenceError, EXIT_CONVERGENCE),
    (UnphysicalEstimateError, EXIT_UNPHYSICAL),
    (OSError, EXIT_IO),
)


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(args) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    data: dict = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise _Fail(EXIT_IO, f"{path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")

    # command-line overrides, in the units of the run
    def section(name):
        sec = data.setdefault(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: expected an object")
        return sec

    if getattr(args, "noise_sigma", None) is not None:
        section("sim")["noise_sigma"] = args.noise_sigma
    if getattr(args, "extreme", False):
        section("sim")["extreme"] = True
    if getattr(args, "omega", None) is not None:
        section("protocol")["omega"] = args.omega
        section("campaign")["omega"] = args.omega
        section("convergence")["omega"] = args.omega
    if getattr(args, "n_truths", None) is not None:
        section("campaign")["n_truths"] = args.n_truths
    if getattr(args, "n_trials", None) is not None:
        section("campaign")["n_trials"] = args.n_trials
    return parse_config(data, units=args.units, seed=args.seed)


def _meta(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": config_hash(cfg.to_dict()), "tool_version": __version__}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _protocol(cfg: RunConfig) -> Protocol:
    p = cfg.protocol
    return g_optimal_protocol(p.omega, cfg.sim.sample_rate, p.revolutions, p.dwell_after)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    protocol = _protocol(cfg)
    truth = cfg.truth or draw_truth(cfg.sim, trial_rng(cfg.seed, TRUTH_STREAM, 0))
    run = simulate_protocol_run(truth, protocol, cfg.sim, trial_rng(cfg.seed, TRIAL_STREAM, 0, 0))

    out = Path(args.out or "gyro_log.csv")
    write_log_csv(out, run.log, labeled=not args.unlabeled)
    stem = out.with_suffix("")
    write_json(
        f"{stem}.truth.json",
        {"kind": "truth", "params": truth.as_dict(), "axes": run.axes.tolist(), "meta": _meta(cfg)},
    )
    write_json(f"{stem}.protocol.json", protocol.to_dict())
    return EXIT_OK


def _calibration_report(res: EstimationResult, obs, cfg: RunConfig, solver: str) -> dict:
    return {
        "kind": "calibration",
        "solver": solver,
        "params": res.params.as_dict(),
        "beta": [float(v) for v in res.beta],
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "cost": float(res.final_cost),
        "residuals": [float(v) for v in residuals(res.beta, obs)],
        "meta": _meta(cfg),
    }


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    log_path = Path(args.log)
    if not log_path.is_file():
        raise _Fail(EXIT_IO, f"{log_path}: no such file")
    log = read_log_csv(log_path, rate_scale=cfg.rate_scale)

    sidecar = args.protocol
    if sidecar is None:
        default = log_path.with_suffix("").as_posix() + ".protocol.json"
        sidecar = default if Path(default).is_file() else None
    if sidecar is not None:
        protocol = Protocol.from_dict(read_json(sidecar), rate_scale=cfg.rate_scale)
    else:
        protocol = _protocol(cfg)

    labels = log.obs_id if np.any(log.obs_id >= 0) else None
    segmented = segment_log(log.t, log.m, protocol, labels=labels)
    obs = observations_from(segmented, protocol)
    try:
        res = solve(obs, cfg.solver, args.solver)
    except ConvergenceError as exc:
        if exc.result is not None:
            _emit(dumps(_calibration_report(exc.result, obs, cfg, args.solver)), args.out)
        raise
    _emit(dumps(_calibration_report(res, obs, cfg, args.solver)), args.out)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    c = cfg.campaign
    report = run_campaign(
        cfg.sim, c.n_truths, c.n_trials, c.omega, args.solver, cfg.solver, cfg.protocol.revolutions
    )
    if args.format == "csv":
        header = ("truth_index", "trial_index", "parameter", "truth", "estimate", "error")
        _emit(_csv_text(header, report.long_rows()), args.out)
    else:
        _emit(dumps(report.to_dict() | {"meta": _meta(cfg)}), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    c = cfg.campaign
    report = speed_sweep(cfg.sim, c.grid, c.n_truths, c.n_trials, args.solver, cfg.solver)
    if args.format == "csv":
        _emit(_csv_text(("omega", "parameter", "mse"), report.long_rows()), args.out)
    else:
        _emit(dumps(report.to_dict() | {"meta": _meta(cfg)}), args.out)
    return EXIT_OK


def _comparable(report: dict, path: str) -> dict[str, float]:
    kind = report.get("kind") if isinstance(report, dict) else None
    try:
        if kind == "calibration":
            return {k: float(report["params"][k]) for k in PARAM_NAMES}
        if kind == "montecarlo":
            return {k: float(report["parameters"][k]["median"]) for k in PARAM_NAMES}
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(f"{path}: malformed {kind} report ({exc})") from exc
    raise LogFormatError(f"{path}: cannot compare a report of kind {kind!r}")


def compare_reports(a: dict, b: dict, path_a: str = "a", path_b: str = "b") -> dict:
    """Per-parameter ``b - a`` with a flag for ``|delta| >= 1e-3``."""
    va, vb = _comparable(a, path_a), _comparable(b, path_b)
    rows = {}
    for k in PARAM_NAMES:
        d = vb[k] - va[k]
        rows[k] = {"a": va[k], "b": vb[k], "delta": d, "flagged": bool(abs(d) >= AGREEMENT_BAR)}
    return {
        "kind": "compare",
        "a": path_a,
        "b": path_b,
        "threshold": AGREEMENT_BAR,
        "parameters": rows,
        "n_flagged": sum(r["flagged"] for r in rows.values()),
    }


def cmd_compare(args) -> int:
    diff = compare_reports(read_json(args.a), read_json(args.b), args.a, args.b)
    if args.format == "csv":
        rows = ((k, r["a"], r["b"], r["delta"], int(r["flagged"])) for k, r in diff["parameters"].items())
        text = _csv_text(("parameter", "a", "b", "delta", "flagged"), rows)
    elif args.format == "json":
        text = dumps(diff)
    else:
        lines = [f"{'param':<6} {'a':>14} {'b':>14} {'delta':>12}"]
        for k, r in diff["parameters"].items():
            flag = "  FLAG" if r["flagged"] else ""
            lines.append(f"{k:<6} {r['a']:>14.8f} {r['b']:>14.8f} {r['delta']:>12.3e}{flag}")
        lines.append(f"{diff['n_flagged']} parameter(s) differ by >= {AGREEMENT_BAR:g}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _load_config(args)
    truths = cfg.convergence_cases or CONVERGENCE_CASES
    cases = convergence_study([(t, cfg.sim) for t in truths], cfg.convergence_omega, cfg.solver)
    if args.format == "csv":
        rows = []
        for i, case in enumerate(cases):
            for it, est in enumerate(case.estimates):
                rows.append((i, it, *(float(v) for v in est.as_array())))
        _emit(_csv_text(("case", "iteration", *PARAM_NAMES), rows), args.out)
        return EXIT_OK
    out = {
        "kind": "convergence",
        "omega": cfg.convergence_omega,
        "cases": [
            {
                "truth": c.truth.as_dict(),
                "iterations": c.iterations,
                "converged": c.converged,
                "history": [[float(v) for v in row] for row in c.history],
                "estimates": [e.as_dict() for e in c.estimates],
            }
            for c in cases
        ],
        "meta": _meta(cfg),
    }
    _emit(dumps(out), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gyrocal", description="Triaxial gyroscope calibration")
    parser.add_argument("--version", action="version", version=f"gyrocal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--units", choices=("rad", "deg"), help="unit of angular rates in inputs")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver", choices=("ils", "lm"), default="ils")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--omega", type=float, help="protocol speed")
    sim.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    sim.add_argument("--extreme", action="store_true", help="poor-quality sensor ranges")

    campaign = argparse.ArgumentParser(add_help=False)
    campaign.add_argument("--n-truths", type=int, dest="n_truths")
    campaign.add_argument("--n-trials", type=int, dest="n_trials")

    p = sub.add_parser("simulate", parents=[common, sim], help="write a synthetic sample log")
    p.add_argument("--unlabeled", action="store_true", help="write obs_id = -1 everywhere")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common, solver], help="calibrate from a sample log")
    p.add_argument("log")
    p.add_argument("--protocol", help="protocol sidecar (default: <log stem>.protocol.json)")
    p.add_argument("--omega", type=float, help="speed of the default protocol")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("montecarlo", parents=[common, solver, sim, campaign], help="Monte-Carlo campaign")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep", parents=[common, solver, sim, campaign], help="speed sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="per-parameter differences of two reports")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("convergence", parents=[common, sim], help="ILS iterate traces")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"gyrocal: error: {exc}", file=sys.stderr)
        return exc.code
    except tuple(cls for cls, _ in _EXIT_CODES) as exc:
        code = next(c for cls, c in _EXIT_CODES if isinstance(exc, cls))
        print(f"gyrocal: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
