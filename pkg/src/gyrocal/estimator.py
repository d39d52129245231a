"""Least-squares estimation of the six calibration parameters.

Two solvers share one contract:

* :func:`solve_ils` -- the batch fixed-point iteration that alternates between
  fixing the constant term ``beta0`` from the current coefficients and solving
  an ordinary least-squares problem for ``beta1..beta6``.
* :func:`solve_lm` -- a Levenberg-Marquardt fit directly over ``(k, b)``, kept
  as an independent cross-check.

For exactly six observations both reach a zero-residual solution and agree to
solver precision. With more rows the fixed point of the iteration is not the
constrained least-squares optimum, so the two can differ by a small amount.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gyrocal.errors import ConvergenceError, SingularDesignError, UnphysicalEstimateError
from gyrocal.model import (
    BetaVector,
    CalibrationParams,
    beta0_from_coefficients,
    beta_to_params,
    params_to_beta,
)

MIN_OBSERVATIONS = 6
# mean of squares may undershoot the squared mean by rounding only
_JENSEN_RTOL = 1e-12


@dataclass(frozen=True)
class Observation:
    """One per-revolution averaged regression row.

    Means of the raw components are in rad/s, means of their squares in
    (rad/s)^2, and ``response_y`` is the squared commanded speed.
    """

    mean_mx: float
    mean_my: float
    mean_mz: float
    mean_mx2: float
    mean_my2: float
    mean_mz2: float
    response_y: float

    def __post_init__(self) -> None:
        lin = np.array([self.mean_mx, self.mean_my, self.mean_mz])
        sq = np.array([self.mean_mx2, self.mean_my2, self.mean_mz2])
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(sq)) and np.isfinite(self.response_y)):
            raise ValueError("observation values must be finite")
        if np.any(sq < lin**2 - _JENSEN_RTOL * np.maximum(sq, 1.0)):
            raise ValueError(f"mean of squares {sq} below squared mean {lin**2}")
        if self.response_y < 0.0:
            raise ValueError(f"response must be non-negative, got {self.response_y}")

    @property
    def regressors(self) -> NDArray[np.float64]:
        """Row of the design matrix, squared terms first."""
        return np.array(
            [self.mean_mx2, self.mean_my2, self.mean_mz2, self.mean_mx, self.mean_my, self.mean_mz]
        )

    @classmethod
    def from_moments(cls, moments: ArrayLike, response_y: float) -> Observation:
        """Build from a ``[mean m^2 (3), mean m (3)]`` row."""
        r = np.asarray(moments, dtype=float).reshape(6)
        return cls(
            mean_mx=float(r[3]),
            mean_my=float(r[4]),
            mean_mz=float(r[5]),
            mean_mx2=float(r[0]),
            mean_my2=float(r[1]),
            mean_mz2=float(r[2]),
            response_y=float(response_y),
        )


@dataclass(frozen=True)
class ObservationSet:
    rows: tuple[Observation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if len(self.rows) < MIN_OBSERVATIONS:
            raise ValueError(
                f"at least {MIN_OBSERVATIONS} observations are required, got {len(self.rows)}"
            )

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @classmethod
    def from_arrays(cls, moments: ArrayLike, response: ArrayLike) -> ObservationSet:
        mom = np.asarray(moments, dtype=float)
        resp = np.broadcast_to(np.asarray(response, dtype=float), (mom.shape[0],))
        return cls(tuple(Observation.from_moments(r, y) for r, y in zip(mom, resp)))

    def regressors(self) -> NDArray[np.float64]:
        return np.array([o.regressors for o in self.rows])

    def responses(self) -> NDArray[np.float64]:
        return np.array([o.response_y for o in self.rows])


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 100
    condition_bound: float = 1e12

    def __post_init__(self) -> None:
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.condition_bound > 1.0:
            raise ValueError(f"condition_bound must exceed 1, got {self.condition_bound}")


@dataclass(frozen=True)
class EstimationResult:
    params: CalibrationParams
    beta: BetaVector
    iterations: int
    final_cost: float
    converged: bool
    solver: str = "ils"
    # coefficient iterates beta1..beta6, first row is the beta0 = 0 solve
    history: tuple[tuple[float, ...], ...] = field(default=(), repr=False)


def build_design_matrix(
    obs: ObservationSet, condition_bound: float = 1e12
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Design matrix ``X`` (n x 6, squared columns first) and responses ``y``.

    Column ``j`` of ``X`` multiplies ``beta_{j+1}``. Raises
    :class:`SingularDesignError` for a rank-deficient or ill-conditioned design.
    """
    X = obs.regressors()
    y = obs.responses()
    if X.shape[0] < MIN_OBSERVATIONS:
        raise SingularDesignError(f"need {MIN_OBSERVATIONS} rows, got {X.shape[0]}")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= sv[0] * np.finfo(float).eps * max(X.shape):
        raise SingularDesignError(f"design matrix is rank deficient (singular values {sv})")
    cond = sv[0] / sv[-1]
    if cond > condition_bound:
        raise SingularDesignError(f"design condition number {cond:.3e} exceeds {condition_bound:.3e}")
    return X, y


def residuals(beta: BetaVector | ArrayLike, obs: ObservationSet) -> NDArray[np.float64]:
    """Predicted minus reference response, with ``beta0`` from the consistency identity."""
    coef = np.asarray(beta, dtype=float).reshape(7)[1:]
    beta0 = beta0_from_coefficients(coef)
    return beta0 + obs.regressors() @ coef - obs.responses()


def cost(beta: BetaVector | ArrayLike, obs: ObservationSet) -> float:
    """Sum of squared response residuals, in (rad/s)^4."""
    r = residuals(beta, obs)
    return float(r @ r)


def l1_cost(beta: BetaVector | ArrayLike, obs: ObservationSet) -> float:
    """Sum of absolute response residuals, a diagnostic in (rad/s)^2."""
    return float(np.sum(np.abs(residuals(beta, obs))))


def _lstsq(X, rhs):
    return np.linalg.lstsq(X, rhs, rcond=None)[0]


def solve_ils(obs: ObservationSet, cfg: SolverConfig | None = None) -> EstimationResult:
    """Iterative least-squares fit of the calibration regression.

    Starts from ``beta0 = 0``, then repeatedly sets the constant term to
    ``gamma = sum_j beta_{j+3}^2 / (4 beta_j)`` from the previous coefficients
    and re-solves the linear least-squares problem on ``y - gamma``. Stops once
    the summed absolute change of ``beta1..beta6`` is at most
    ``cfg.tolerance``. ``iterations`` counts these constant-term updates.

    Raises
    ------
    SingularDesignError
        If the design matrix fails the rank/condition check.
    UnphysicalEstimateError
        If any squared gain is non-positive when ``gamma`` is evaluated.
    ConvergenceError
        If ``cfg.max_iterations`` updates pass without meeting the tolerance.
    """
    cfg = cfg or SolverConfig()
    X, y = build_design_matrix(obs, cfg.condition_bound)

    coef = _lstsq(X, y)
    history = [tuple(coef)]
    converged = False
    n = 0
    while n < cfg.max_iterations:
        gamma = beta0_from_coefficients(coef)
        new = _lstsq(X, y - gamma)
        step = float(np.sum(np.abs(new - coef)))
        coef = new
        n += 1
        history.append(tuple(coef))
        if step <= cfg.tolerance:
            converged = True
            break

    beta = BetaVector.from_coefficients(coef)
    result = EstimationResult(
        params=beta_to_params(beta),
        beta=beta,
        iterations=n,
        final_cost=cost(beta, obs),
        converged=converged,
        solver="ils",
        history=tuple(history),
    )
    if not converged:
        raise ConvergenceError(f"ILS did not converge in {cfg.max_iterations} iterations", result)
    return result


def _lm_model(theta, X):
    k, b = theta[:3], theta[3:]
    sq, lin = X[:, :3], X[:, 3:]
    k2 = k * k
    pred = (sq + 2.0 * b * lin + b * b) @ k2
    jac = np.empty((X.shape[0], 6))
    jac[:, :3] = 2.0 * k * (sq + 2.0 * b * lin + b * b)
    jac[:, 3:] = k2 * (2.0 * lin + 2.0 * b)
    return pred, jac


def solve_lm(obs: ObservationSet, cfg: SolverConfig | None = None) -> EstimationResult:
    """Levenberg-Marquardt fit over ``(kx, ky, kz, bx, by, bz)``.

    Minimises the squared response residuals of the full nonlinear model
    (``beta0`` tied to the other coefficients) from the identity sensor as
    initial guess. Uses Nielsen's damping update with a Marquardt-scaled
    diagonal. ``iterations`` counts accepted and rejected trial steps.
    """
    cfg = cfg or SolverConfig()
    X, y = build_design_matrix(obs, cfg.condition_bound)

    theta = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    pred, J = _lm_model(theta, X)
    r = pred - y
    f = float(r @ r)
    A = J.T @ J
    g = J.T @ r
    mu = 1e-3 * float(np.max(np.diag(A)))
    nu = 2.0
    xtol = 1e-15
    gtol = 1e-15 * max(1.0, float(y @ y))

    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        if np.max(np.abs(g)) <= gtol or f == 0.0:
            converged = True
            break
        D = np.diag(np.maximum(np.diag(A), 1e-12))
        try:
            delta = np.linalg.solve(A + mu * D, -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        cand = theta + delta
        pred_c, J_c = _lm_model(cand, X)
        r_c = pred_c - y
        f_c = float(r_c @ r_c)
        predicted = float(-delta @ (2.0 * g + A @ delta))
        rho = (f - f_c) / predicted if predicted > 0.0 else -1.0
        small_step = np.linalg.norm(delta) <= xtol * (np.linalg.norm(theta) + xtol)
        if rho > 0.0:
            theta, r, f, J = cand, r_c, f_c, J_c
            A = J.T @ J
            g = J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
        if small_step:
            converged = True
            break

    # the residual depends on k only through k^2
    theta[:3] = np.abs(theta[:3])
    if np.any(theta[:3] <= 0.0) or not np.all(np.isfinite(theta)):
        raise UnphysicalEstimateError(f"LM reached an unphysical estimate {theta}")
    params = CalibrationParams.from_array(theta)
    beta = params_to_beta(params)
    result = EstimationResult(
        params=params,
        beta=beta,
        iterations=it,
        final_cost=cost(beta, obs),
        converged=converged,
        solver="lm",
    )
    if not converged:
        raise ConvergenceError(f"LM did not converge in {cfg.max_iterations} iterations", result)
    return result


SOLVERS = {"ils": solve_ils, "lm": solve_lm}


def solve(obs: ObservationSet, cfg: SolverConfig | None = None, solver: str = "ils") -> EstimationResult:
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}") from None
    return fn(obs, cfg)
