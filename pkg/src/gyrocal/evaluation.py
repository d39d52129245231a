"""Monte-Carlo campaigns over synthetic gyroscopes.

A campaign draws ``n_truths`` sensors and simulates ``n_trials`` independent
protocol runs for each, estimating the parameters every time. The hot path
reduces samples to moments and runs the batched least-squares kernel, so a few
thousand trials take seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gyrocal import _kernels
from gyrocal.errors import CalibrationError, ConvergenceError
from gyrocal.estimator import ObservationSet, SolverConfig, solve_ils, solve_lm
from gyrocal.model import PARAM_NAMES, CalibrationParams
from gyrocal.protocol import g_optimal_protocol
from gyrocal.simulator import (
    TRIAL_STREAM,
    TRUTH_STREAM,
    SimConfig,
    draw_truth,
    simulate_observations,
    trial_rng,
)

CONVERGENCE_STREAM = 2

QUANTILE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)

CONVERGENCE_CASES = (
    CalibrationParams(1.9074, 1.9529, 1.5635, 0.0827, 0.0265, -0.0805),
    CalibrationParams(1.0979, 1.1052, 0.9851, -0.1046, 0.1995, 0.1565),
    CalibrationParams(1.5044, 1.6494, 1.5282, 0.1483, -0.1282, 0.1794),
)


@dataclass(frozen=True)
class TrialRecord:
    truth: CalibrationParams
    estimate: CalibrationParams | None
    iterations: int
    converged: bool
    solver: str = "ils"

    @property
    def errors(self) -> NDArray[np.float64]:
        """Estimate minus truth, ``(kx, ky, kz, bx, by, bz)``."""
        if self.estimate is None:
            return np.full(6, np.nan)
        return self.estimate.as_array() - self.truth.as_array()


def mse(records: Sequence[TrialRecord]) -> NDArray[np.float64]:
    """Per-parameter mean squared estimation error over converged records."""
    if len(records) == 0:
        raise ValueError("mse of an empty record list")
    if not all(r.converged for r in records):
        raise ValueError("mse requires converged records; filter failures first")
    err = np.array([r.errors for r in records])
    return np.mean(err**2, axis=0)


@dataclass(frozen=True)
class MonteCarloReport:
    """Raw trial outcomes plus the summary statistics derived from them.

    Arrays are ordered truth-major: row ``i * n_trials + j`` is trial ``j`` of
    truth ``i``. Failed trials keep NaN estimates.
    """

    config: dict
    omega: float
    solver: str
    n_truths: int
    n_trials: int
    truths: NDArray[np.float64]
    estimates: NDArray[np.float64]
    iterations: NDArray[np.int64]
    status: NDArray[np.int64]

    @property
    def converged(self) -> NDArray[np.bool_]:
        return self.status == _kernels.STATUS_CONVERGED

    @property
    def n_failed(self) -> int:
        return int(np.sum(~self.converged))

    @property
    def errors(self) -> NDArray[np.float64]:
        """Errors of converged trials, shape ``(n_converged, 6)``."""
        ok = self.converged
        return self.estimates[ok] - self.truths[ok]

    @property
    def mse(self) -> NDArray[np.float64]:
        return np.mean(self.errors**2, axis=0)

    @property
    def quantiles(self) -> NDArray[np.float64]:
        """``(5, 6)`` array of min, q1, median, q3, max per parameter."""
        return np.quantile(self.errors, QUANTILE_LEVELS, axis=0)

    @property
    def median(self) -> NDArray[np.float64]:
        return np.median(self.errors, axis=0)

    @property
    def median_se(self) -> NDArray[np.float64]:
        """Large-sample standard error of the median, ``sqrt(pi/2) * sd / sqrt(n)``."""
        e = self.errors
        return math.sqrt(math.pi / 2.0) * np.std(e, axis=0, ddof=1) / math.sqrt(len(e))

    def fraction_within(self, band: float | ArrayLike) -> NDArray[np.float64]:
        return np.mean(np.abs(self.errors) <= np.asarray(band), axis=0)

    def iteration_histogram(self) -> dict[int, int]:
        it = self.iterations[self.converged]
        values, counts = np.unique(it, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def records(self) -> list[TrialRecord]:
        out = []
        for truth, est, it, st in zip(self.truths, self.estimates, self.iterations, self.status):
            ok = st == _kernels.STATUS_CONVERGED
            out.append(
                TrialRecord(
                    truth=CalibrationParams.from_array(truth),
                    estimate=CalibrationParams.from_array(est) if ok else None,
                    iterations=int(it),
                    converged=bool(ok),
                    solver=self.solver,
                )
            )
        return out

    def to_dict(self) -> dict:
        q = self.quantiles
        per_param = {}
        for j, name in enumerate(PARAM_NAMES):
            per_param[name] = {
                "min": float(q[0, j]),
                "q1": float(q[1, j]),
                "median": float(q[2, j]),
                "q3": float(q[3, j]),
                "max": float(q[4, j]),
                "median_se": float(self.median_se[j]),
                "mse": float(self.mse[j]),
            }
        return {
            "kind": "montecarlo",
            "config": self.config,
            "omega": self.omega,
            "solver": self.solver,
            "n_truths": self.n_truths,
            "n_trials": self.n_trials,
            "n_failed": self.n_failed,
            "iteration_histogram": {str(k): v for k, v in self.iteration_histogram().items()},
            "parameters": per_param,
        }

    def long_rows(self) -> Iterable[tuple]:
        """``(truth_index, trial_index, parameter, truth, estimate, error)`` rows."""
        for row, (truth, est) in enumerate(zip(self.truths, self.estimates)):
            i, j = divmod(row, self.n_trials)
            for p, name in enumerate(PARAM_NAMES):
                yield (i, j, name, float(truth[p]), float(est[p]), float(est[p] - truth[p]))


def _estimates_from_beta(beta: NDArray, status: NDArray) -> NDArray:
    est = np.full((beta.shape[0], 6), np.nan)
    ok = status == _kernels.STATUS_CONVERGED
    gains = beta[ok, 1:4]
    est[ok, :3] = np.sqrt(gains)
    est[ok, 3:] = beta[ok, 4:7] / (2.0 * gains)
    return est


def solve_batch(
    moments: NDArray, omega: float, solver: str = "ils", solver_cfg: SolverConfig | None = None
) -> tuple[NDArray, NDArray, NDArray]:
    """Estimate parameters for a stack of ``(T, n, 6)`` moment matrices.

    Returns ``(estimates (T, 6), iterations (T,), status (T,))``.
    """
    solver_cfg = solver_cfg or SolverConfig()
    T, n, _ = moments.shape
    Y = np.full((T, n), omega * omega)
    if solver == "ils":
        beta, passes, status = _kernels.ils_batch(
            moments, Y, solver_cfg.tolerance, solver_cfg.max_iterations
        )
        cond = np.linalg.cond(moments)
        status = np.where(
            (status == _kernels.STATUS_CONVERGED) & ~(cond <= solver_cfg.condition_bound),
            _kernels.STATUS_SINGULAR,
            status,
        )
        return _estimates_from_beta(beta, status), passes, status
    if solver == "lm":
        est = np.full((T, 6), np.nan)
        iters = np.zeros(T, dtype=np.int64)
        status = np.full(T, _kernels.STATUS_CONVERGED, dtype=np.int64)
        for t in range(T):
            try:
                res = solve_lm(ObservationSet.from_arrays(moments[t], Y[t]), solver_cfg)
            except ConvergenceError:
                status[t] = _kernels.STATUS_MAX_ITER
                continue
            except CalibrationError:
                status[t] = _kernels.STATUS_UNPHYSICAL
                continue
            est[t] = res.params.as_array()
            iters[t] = res.iterations
        return est, iters, status
    raise ValueError(f"unknown solver {solver!r}")


def campaign_moments(
    cfg: SimConfig, n_truths: int, n_trials: int, omega: float, revolutions: int = 1
) -> tuple[NDArray, NDArray]:
    """Truths ``(n_truths, 6)`` and moments ``(n_truths * n_trials, 6, 6)``."""
    if n_truths < 1 or n_trials < 1:
        raise ValueError("n_truths and n_trials must be >= 1")
    protocol = g_optimal_protocol(omega, cfg.sample_rate, revolutions)
    truths = [draw_truth(cfg, trial_rng(cfg.seed, TRUTH_STREAM, i)) for i in range(n_truths)]
    moments = np.empty((n_truths * n_trials, len(protocol), 6))
    for i, truth in enumerate(truths):
        for j in range(n_trials):
            rng = trial_rng(cfg.seed, TRIAL_STREAM, i, j)
            moments[i * n_trials + j] = simulate_observations(truth, protocol, cfg, rng)
    return np.array([t.as_array() for t in truths]), moments


def run_campaign(
    cfg: SimConfig,
    n_truths: int,
    n_trials: int,
    omega: float = 1.0,
    solver: str = "ils",
    solver_cfg: SolverConfig | None = None,
    revolutions: int = 1,
) -> MonteCarloReport:
    """Simulate and estimate ``n_truths * n_trials`` calibrations.

    Solver failures are recorded per trial (``status``) and never abort the
    campaign.
    """
    truths, moments = campaign_moments(cfg, n_truths, n_trials, omega, revolutions)
    est, iters, status = solve_batch(moments, omega, solver, solver_cfg)
    return MonteCarloReport(
        config=cfg.to_dict() | {"kind": type(cfg).__name__},
        omega=float(omega),
        solver=solver,
        n_truths=n_truths,
        n_trials=n_trials,
        truths=np.repeat(truths, n_trials, axis=0),
        estimates=est,
        iterations=iters,
        status=status,
    )


def default_speed_grid() -> NDArray[np.float64]:
    """0.3 to 3.0 rad/s in 0.1 rad/s steps."""
    return np.round(np.arange(3, 31) * 0.1, 10)


@dataclass(frozen=True)
class SweepReport:
    points: tuple[tuple[float, MonteCarloReport], ...]

    def __post_init__(self) -> None:
        grid = np.array([w for w, _ in self.points])
        if grid.size and np.any(np.diff(grid) <= 0.0):
            raise ValueError("sweep grid must be strictly increasing")

    @property
    def grid(self) -> NDArray[np.float64]:
        return np.array([w for w, _ in self.points])

    @property
    def mse(self) -> NDArray[np.float64]:
        """``(n_points, 6)`` per-parameter MSE."""
        return np.array([r.mse for _, r in self.points])

    @property
    def scale_mse(self) -> NDArray[np.float64]:
        """Scale-factor MSE averaged over the three axes, per grid point."""
        return self.mse[:, :3].mean(axis=1)

    @property
    def bias_mse(self) -> NDArray[np.float64]:
        return self.mse[:, 3:].mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "sweep",
            "points": [
                {
                    "omega": float(w),
                    "n_failed": r.n_failed,
                    "mse": dict(zip(PARAM_NAMES, (float(v) for v in r.mse))),
                }
                for w, r in self.points
            ],
            "config": self.points[0][1].config if self.points else {},
        }

    def long_rows(self) -> Iterable[tuple]:
        """``(omega, parameter, mse)`` rows."""
        for w, r in self.points:
            for name, v in zip(PARAM_NAMES, r.mse):
                yield (float(w), name, float(v))


def speed_sweep(
    cfg: SimConfig,
    grid: ArrayLike | None = None,
    n_truths: int = 30,
    n_trials: int = 500,
    solver: str = "ils",
    solver_cfg: SolverConfig | None = None,
) -> SweepReport:
    """One campaign per speed. Truths are shared across grid points (same seed)."""
    grid = default_speed_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0):
        raise ValueError("sweep speeds must be positive")
    points = tuple(
        (float(w), run_campaign(cfg, n_truths, n_trials, float(w), solver, solver_cfg)) for w in grid
    )
    return SweepReport(points)


@dataclass(frozen=True)
class ConvergenceCase:
    truth: CalibrationParams
    # coefficient iterates beta1..beta6, row 0 from the beta0 = 0 solve
    history: NDArray[np.float64]
    iterations: int
    converged: bool
    estimates: tuple[CalibrationParams, ...] = field(default=())


def _params_from_coef(coef) -> CalibrationParams | None:
    c = np.asarray(coef)
    if np.any(c[:3] <= 0.0):
        return None
    return CalibrationParams.from_arrays(np.sqrt(c[:3]), c[3:] / (2.0 * c[:3]))


def convergence_study(
    cases: Sequence[tuple[CalibrationParams, SimConfig]],
    omega: float = 1.0,
    solver_cfg: SolverConfig | None = None,
) -> list[ConvergenceCase]:
    """Simulate one protocol run per case and keep every ILS iterate."""
    out = []
    for idx, (truth, cfg) in enumerate(cases):
        protocol = g_optimal_protocol(omega, cfg.sample_rate)
        rng = trial_rng(cfg.seed, CONVERGENCE_STREAM, idx)
        moments = simulate_observations(truth, protocol, cfg, rng)
        obs = ObservationSet.from_arrays(moments, omega * omega)
        try:
            res = solve_ils(obs, solver_cfg)
        except ConvergenceError as exc:
            res = exc.result
        hist = np.array(res.history)
        est = tuple(p for p in (_params_from_coef(h) for h in hist) if p is not None)
        out.append(ConvergenceCase(truth, hist, res.iterations, res.converged, est))
    return out


@dataclass(frozen=True)
class BeforeAfter:
    before: NDArray[np.float64]
    after: NDArray[np.float64]

    @property
    def ratio(self) -> NDArray[np.float64]:
        with np.errstate(divide="ignore"):
            return self.before / self.after


def before_after_metrics(actual: ArrayLike, raw: ArrayLike, calibrated: ArrayLike) -> BeforeAfter:
    """Per-axis MSE of raw and corrected readings against the reference rate."""
    a = np.asarray(actual, dtype=float)
    r = np.asarray(raw, dtype=float)
    c = np.asarray(calibrated, dtype=float)
    if not (a.shape == r.shape == c.shape):
        raise ValueError(f"series shapes differ: {a.shape}, {r.shape}, {c.shape}")
    return BeforeAfter(np.mean((r - a) ** 2, axis=0), np.mean((c - a) ** 2, axis=0))
