"""Six-parameter triaxial gyroscope error model.

The calibrated (actual) angular velocity relates to the raw reading through a
diagonal gain and an additive bias per axis::

    g_j = k_j * (m_j + b_j),    j in {x, y, z}

Squaring and summing the three components against the known rotation speed
gives a regression that is linear in seven coefficients ``beta0..beta6``::

    omega^2 = beta0 + beta1*mx^2 + beta2*my^2 + beta3*mz^2
                    + beta4*mx   + beta5*my   + beta6*mz

with ``beta_j = k_j^2`` for the squared terms, ``beta_{j+3} = 2 k_j^2 b_j`` for
the linear terms and ``beta0 = sum_j k_j^2 b_j^2``. Only six of the seven are
free: ``beta0`` is fixed by the other six (see :func:`beta0_from_coefficients`).

All angular rates are rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from gyrocal.errors import UnphysicalEstimateError

PARAM_NAMES = ("kx", "ky", "kz", "bx", "by", "bz")


@dataclass(frozen=True)
class CalibrationParams:
    """Per-axis scale factors (dimensionless) and biases (rad/s)."""

    kx: float
    ky: float
    kz: float
    bx: float
    by: float
    bz: float

    def __post_init__(self) -> None:
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ValueError(f"calibration parameters must be finite, got {values}")
        if np.any(values[:3] <= 0.0):
            raise ValueError(f"scale factors must be positive, got {values[:3]}")

    @classmethod
    def from_arrays(cls, scale: ArrayLike, bias: ArrayLike) -> CalibrationParams:
        k = np.asarray(scale, dtype=float).reshape(3)
        b = np.asarray(bias, dtype=float).reshape(3)
        return cls(*(float(v) for v in k), *(float(v) for v in b))

    @classmethod
    def from_array(cls, values: ArrayLike) -> CalibrationParams:
        v = np.asarray(values, dtype=float).reshape(6)
        return cls(*(float(x) for x in v))

    @classmethod
    def identity(cls) -> CalibrationParams:
        return cls(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)

    @property
    def scale(self) -> NDArray[np.float64]:
        return np.array([self.kx, self.ky, self.kz])

    @property
    def bias(self) -> NDArray[np.float64]:
        return np.array([self.bx, self.by, self.bz])

    def as_array(self) -> NDArray[np.float64]:
        """Parameters in the fixed order ``(kx, ky, kz, bx, by, bz)``."""
        return np.array([self.kx, self.ky, self.kz, self.bx, self.by, self.bz])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, (float(v) for v in self.as_array())))


class BetaVector(NamedTuple):
    """Coefficients of the linearised calibration regression.

    ``beta0`` is in (rad/s)^2, ``beta1..beta3`` are squared gains and
    ``beta4..beta6`` are gain-weighted biases in rad/s.
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    beta6: float

    @classmethod
    def from_coefficients(cls, coef: ArrayLike) -> BetaVector:
        """Build from the six free coefficients, filling ``beta0`` by consistency."""
        c = np.asarray(coef, dtype=float).reshape(6)
        return cls(beta0_from_coefficients(c), *(float(v) for v in c))

    @property
    def coefficients(self) -> NDArray[np.float64]:
        """``beta1..beta6`` as an array (regression column order)."""
        return np.asarray(self[1:], dtype=float)


def beta0_from_coefficients(coef: ArrayLike) -> float:
    """Constant term implied by the six free coefficients.

    ``beta0 = beta4^2/(4 beta1) + beta5^2/(4 beta2) + beta6^2/(4 beta3)``.
    Raises :class:`UnphysicalEstimateError` when any squared gain is not
    strictly positive, since the identity is then meaningless.
    """
    c = np.asarray(coef, dtype=float).reshape(6)
    gains = c[:3]
    if not np.all(gains > 0.0):
        raise UnphysicalEstimateError(f"squared gains must be positive, got {gains}")
    return float(np.sum(c[3:] ** 2 / (4.0 * gains)))


def apply_calibration(params: CalibrationParams, measured: ArrayLike) -> NDArray[np.float64]:
    """Correct raw readings: ``G = k * (M + b)`` per axis.

    ``measured`` may be a single 3-vector or an ``(n, 3)`` array of samples.
    """
    m = np.asarray(measured, dtype=float)
    return params.scale * (m + params.bias)


def inverse_model(params: CalibrationParams, actual: ArrayLike) -> NDArray[np.float64]:
    """Raw reading produced by a sensor with ``params`` at true rate ``actual``."""
    k = params.scale
    if np.any(k == 0.0):
        raise ValueError("inverse model undefined for a zero scale factor")
    g = np.asarray(actual, dtype=float)
    return g / k - params.bias


def params_to_beta(params: CalibrationParams) -> BetaVector:
    k2 = params.scale**2
    b = params.bias
    lin = 2.0 * k2 * b
    beta0 = float(np.sum(k2 * b * b))
    return BetaVector(beta0, *(float(v) for v in k2), *(float(v) for v in lin))


def beta_to_params(beta: BetaVector | ArrayLike) -> CalibrationParams:
    """Recover scale factors and biases from a 7-element beta vector.

    Non-positive squared gains indicate an unidentifiable or badly corrupted
    fit and raise :class:`UnphysicalEstimateError` rather than being clamped.
    """
    v = np.asarray(beta, dtype=float).reshape(7)
    gains = v[1:4]
    if not np.all(gains > 0.0) or not np.all(np.isfinite(v)):
        raise UnphysicalEstimateError(f"squared gains must be positive and finite, got {gains}")
    k = np.sqrt(gains)
    b = v[4:7] / (2.0 * gains)
    return CalibrationParams.from_arrays(k, b)


def squared_speed(params: CalibrationParams, measured: ArrayLike) -> NDArray[np.float64]:
    """Squared norm of the corrected rate, expanded as the linear regression."""
    m = np.asarray(measured, dtype=float)
    beta = np.asarray(params_to_beta(params))
    return beta[0] + (m**2) @ beta[1:4] + m @ beta[4:7]
